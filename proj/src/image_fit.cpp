#include "inve/image_fit.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "inve/errors.hpp"
#include "inve/network.hpp"
#include "inve/synthetic.hpp"

namespace inve {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.99;

// Either coordinate network behind one forward/collect surface.
struct FitModel {
  std::optional<GridNetwork<float>> grid;
  std::optional<SinusoidalNetwork<float>> sine;
  std::vector<ad::Parameter<float>*> params;

  ad::Var<float> forward(ad::Graph<float>& g, ad::Var<float> xy) const {
    return grid ? grid->forward(g, xy) : sine->forward(g, xy);
  }
};

void build(FitModel& m, ImageEncoding e, const ImageFitConfig& c, std::mt19937_64& rng) {
  if (e == ImageEncoding::hash_grid) {
    m.grid.emplace("fit", c.grid, c.hidden_width, c.hidden_layers, 3, rng);
    m.grid->collect(m.params);
  } else {
    const int width = c.sinusoidal_width > 0 ? c.sinusoidal_width : matched_sinusoidal_width(c);
    m.sine.emplace("fit", 2, c.frequencies, width, c.hidden_layers, 3, rng);
    m.sine->collect(m.params);
  }
}

}  // namespace

std::string_view encoding_name(ImageEncoding e) {
  return e == ImageEncoding::hash_grid ? "hash_grid" : "sinusoidal";
}

RgbImage procedural_image(int size, std::uint64_t seed) {
  if (size < 2) throw ContractViolation("procedural_image: size must be >= 2");
  RgbImage img(size, size);
  const double s = size / 256.0;
  struct Disc {
    double x, y, r;
    Rgb c;
  };
  const Disc discs[] = {{70 * s, 80 * s, 30 * s, {0.95f, 0.2f, 0.15f}},
                        {180 * s, 60 * s, 22 * s, {0.1f, 0.3f, 0.9f}},
                        {150 * s, 190 * s, 40 * s, {0.95f, 0.9f, 0.2f}}};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const Rgb a = value_noise(seed, px, py, 64 * s);
      const Rgb b = value_noise(seed + 1, px, py, 16 * s);
      const Rgb d = value_noise(seed + 2, px, py, 4 * s);
      Rgb c;
      for (int k = 0; k < 3; ++k) c[k] = 0.55f * a[k] + 0.3f * b[k] + 0.15f * d[k];
      for (const auto& disc : discs)
        if (std::hypot(px - disc.x, py - disc.y) < disc.r) c = disc.c;
      // stripes in the lower-left corner
      if (px < 90 * s && py > 170 * s) {
        const float v = std::fmod(px + py, 12 * s) < 6 * s ? 0.05f : 0.85f;
        c = {v, v, v};
      }
      img.set(x, y, c);
    }
  return img;
}

std::size_t hash_fit_parameters(const ImageFitConfig& c) {
  MlpConfig head{c.grid.output_dim(), c.hidden_width, c.hidden_layers, 3};
  return c.grid.parameter_count() + head.parameter_count();
}

std::size_t sinusoidal_fit_parameters(const ImageFitConfig& c, int width) {
  MlpConfig head{2 * 2 * c.frequencies, width, c.hidden_layers, 3};
  return head.parameter_count();
}

int matched_sinusoidal_width(const ImageFitConfig& c) {
  const auto target = static_cast<double>(hash_fit_parameters(c));
  int best = 1;
  double best_gap = INFINITY;
  for (int w = 1; w <= 4096; ++w) {
    const double gap = std::abs(static_cast<double>(sinusoidal_fit_parameters(c, w)) - target);
    if (gap < best_gap) {
      best_gap = gap;
      best = w;
    }
  }
  return best;
}

ImageFitResult fit_image(const RgbImage& image, ImageEncoding encoding, const ImageFitConfig& c) {
  if (image.width < 2 || image.height < 2) throw ContractViolation("fit_image: image too small");
  if (c.iterations < 0 || c.batch < 1) throw ConfigError("fit_image: bad iteration or batch count");
  c.grid.validate();

  std::mt19937_64 rng(c.seed);
  FitModel model;
  build(model, encoding, c, rng);

  ImageFitResult r;
  r.encoding = encoding;
  r.parameters = parameter_count(model.params);

  const int w = image.width, h = image.height;
  const float sx = 1.0f / static_cast<float>(w - 1), sy = 1.0f / static_cast<float>(h - 1);
  std::uniform_int_distribution<int> dx(0, w - 1), dy(0, h - 1);
  std::vector<ad::Parameter<float>*> hash, net;
  for (auto* p : model.params) {
    p->tensor.ensure_grad();
    (p->group == ad::ParamGroup::hash_table ? hash : net).push_back(p);
  }

  const auto n = static_cast<std::size_t>(c.batch);
  for (int it = 0; it < c.iterations; ++it) {
    std::vector<float> xy(n * 2), target(n * 3);
    for (std::size_t i = 0; i < n; ++i) {
      const int x = dx(rng), y = dy(rng);
      xy[i * 2] = x * sx;
      xy[i * 2 + 1] = y * sy;
      const Rgb col = image.at(x, y);
      for (int k = 0; k < 3; ++k) target[i * 3 + k] = col[k];
    }
    ad::Graph<float> g;
    ad::Var<float> pred = model.forward(g, g.constant({n, 2}, std::move(xy)));
    ad::Var<float> diff = ad::sub(pred, g.constant({n, 3}, std::move(target)));
    ad::Var<float> loss = ad::scale(ad::sum(ad::square(diff)), 1.0f / static_cast<float>(n));
    r.batch_loss.push_back(loss.item());
    if (!std::isfinite(r.batch_loss.back()))
      throw TrainingDiverged("image_fit", static_cast<long>(it));
    g.backward(loss);
    ad::adam_step<float>(hash, c.lr_hash, kBeta1, kBeta2, 1e-15);
    ad::adam_step<float>(net, c.lr_network, kBeta1, kBeta2, 1e-8);
  }

  // Full-image MSE, in row chunks.
  double total = 0;
  const std::size_t chunk = 8192, pixels = static_cast<std::size_t>(w) * h;
  for (std::size_t begin = 0; begin < pixels; begin += chunk) {
    const std::size_t m = std::min(chunk, pixels - begin);
    std::vector<float> xy(m * 2);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t k = begin + i;
      xy[i * 2] = static_cast<float>(k % w) * sx;
      xy[i * 2 + 1] = static_cast<float>(k / w) * sy;
    }
    ad::Graph<float> g(false);
    const auto out = model.forward(g, g.constant({m, 2}, std::move(xy))).value();
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t k = begin + i;
      const Rgb col = image.at(static_cast<int>(k % w), static_cast<int>(k / w));
      for (int ch = 0; ch < 3; ++ch) {
        const double d = static_cast<double>(out[i * 3 + ch]) - col[ch];
        total += d * d;
      }
    }
  }
  r.final_mse = total / static_cast<double>(pixels);
  return r;
}

}  // namespace inve
