#include "inve/atlas_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "inve/errors.hpp"

namespace inve {

namespace {

constexpr std::size_t kQueryChunk = 4096;
constexpr double kSquashEps = 1e-6;

template <class T>
ad::Tensor<T> pixel_tensor(std::span<const PixelCoord> pixels, const VideoDims& dims) {
  std::vector<T> v(pixels.size() * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto n = normalize(pixels[i], dims);
    for (int k = 0; k < 3; ++k) v[i * 3 + k] = static_cast<T>(n[k]);
  }
  return ad::Tensor<T>({pixels.size(), 3}, std::move(v));
}

// Sigmoid kept strictly inside (0,1) where float rounding would saturate it.
template <class T>
ad::Var<T> squash(ad::Var<T> z) {
  return ad::clamp(ad::activation(z, ad::Activation::sigmoid), static_cast<T>(kSquashEps),
                   static_cast<T>(1.0 - kSquashEps));
}

template <class F>
void for_chunks(std::size_t n, F&& f) {
  for (std::size_t b = 0; b < n; b += kQueryChunk) f(b, std::min(n, b + kQueryChunk));
}

}  // namespace

std::string_view layer_name(Layer layer) {
  return layer == Layer::foreground ? "fg" : "bg";
}

Layer parse_layer(std::string_view name) {
  if (name == "fg" || name == "foreground") return Layer::foreground;
  if (name == "bg" || name == "background") return Layer::background;
  throw ConfigError("unknown layer '" + std::string(name) + "' (expected fg or bg)");
}

bool in_layer_square(double u, double v, Layer layer) {
  if (v < 0.0 || v > 1.0) return false;
  return layer == Layer::foreground ? (u >= 0.5 && u <= 1.0) : (u >= 0.0 && u < 0.5);
}

double normalized_time(int t, const VideoDims& dims) {
  return dims.frames > 1 ? static_cast<double>(t) / (dims.frames - 1) : 0.0;
}

std::array<double, 3> normalize(const PixelCoord& p, const VideoDims& dims) {
  return {dims.width > 1 ? p.x / (dims.width - 1) : 0.0,
          dims.height > 1 ? p.y / (dims.height - 1) : 0.0, normalized_time(p.t, dims)};
}

void check_pixel(const PixelCoord& p, const VideoDims& dims) {
  if (!(p.x >= 0 && p.x < dims.width && p.y >= 0 && p.y < dims.height && p.t >= 0 &&
        p.t < dims.frames)) {
    throw ContractViolation("pixel (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
                            std::to_string(p.t) + ") outside a " + std::to_string(dims.width) +
                            "x" + std::to_string(dims.height) + "x" +
                            std::to_string(dims.frames) + " clip");
  }
}

MappingPrior MappingPrior::for_dims(const VideoDims& dims) {
  const double extent = std::max(1, std::max(dims.width, dims.height) - 1);
  MappingPrior p;
  p.ax = 0.6 * std::max(1, dims.width - 1) / extent;
  p.ay = 0.3 * std::max(1, dims.height - 1) / extent;
  return p;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.video_grid = HashGridConfig{3, 10, 1u << 14, 2, 16, 16};
  c.atlas_grid = HashGridConfig{2, 10, 1u << 14, 2, 16, 512};
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.video_grid = HashGridConfig{3, 6, 1u << 12, 2, 16, 16};
  c.atlas_grid = HashGridConfig{2, 6, 1u << 12, 2, 16, 512};
  return c;
}

ModelConfig ModelConfig::named(std::string_view profile) {
  if (profile == "paper") return paper();
  if (profile == "desk") return desk();
  throw ConfigError("unknown model profile '" + std::string(profile) + "' (expected paper or desk)");
}

HashGridConfig ModelConfig::video_grid_for(const VideoDims& dims) const {
  HashGridConfig g = video_grid;
  g.n_max = std::max(g.n_min, std::max(dims.width, dims.height));
  return g;
}

void ModelConfig::validate() const {
  if (video_grid.dims != 3) throw ConfigError("video grid must be 3-D");
  if (atlas_grid.dims != 2) throw ConfigError("atlas grid must be 2-D");
  video_grid.validate();
  atlas_grid.validate();
  if (hidden_width < 1 || hidden_layers < 0) throw ConfigError("invalid MLP head shape");
}

// ---- ModelBundle ----------------------------------------------------------------

template <class T>
ModelBundle<T>::ModelBundle(ModelConfig config, VideoDims dims, std::uint64_t seed)
    : config_(std::move(config)), dims_(dims), seed_(seed), prior_(MappingPrior::for_dims(dims)) {
  config_.validate();
  if (dims.width < 2 || dims.height < 2 || dims.frames < 1)
    throw ConfigError("model needs a clip of at least 2x2 pixels and one frame");
  std::mt19937_64 rng(seed);
  const HashGridConfig vg = config_.video_grid_for(dims);
  const int w = config_.hidden_width, l = config_.hidden_layers;
  forward_fg_ = GridNetwork<T>("forward_fg", vg, w, l, 2, rng);
  forward_bg_ = GridNetwork<T>("forward_bg", vg, w, l, 2, rng);
  inverse_fg_ = GridNetwork<T>("inverse_fg", vg, w, l, 2, rng);
  inverse_bg_ = GridNetwork<T>("inverse_bg", vg, w, l, 2, rng);
  opacity_net_ = GridNetwork<T>("opacity", vg, w, l, 1, rng);
  atlas_ = GridNetwork<T>("atlas", config_.atlas_grid, w, l, 3, rng);
}

template <class T>
ModelBundle<T>::ModelBundle(const ModelBundle& o)
    : VideoMapping(),
      config_(o.config_),
      dims_(o.dims_),
      seed_(o.seed_),
      prior_(o.prior_),
      forward_fg_(o.forward_fg_),
      forward_bg_(o.forward_bg_),
      inverse_fg_(o.inverse_fg_),
      inverse_bg_(o.inverse_bg_),
      opacity_net_(o.opacity_net_),
      atlas_(o.atlas_),
      forward_trained_(o.forward_trained_),
      inverse_trained_(o.inverse_trained_),
      opacity_override_(o.opacity_override_),
      forward_evals_(o.forward_evals_.load()) {}

template <class T>
ModelBundle<T>& ModelBundle<T>::operator=(const ModelBundle& o) {
  if (this == &o) return *this;
  config_ = o.config_;
  dims_ = o.dims_;
  seed_ = o.seed_;
  prior_ = o.prior_;
  forward_fg_ = o.forward_fg_;
  forward_bg_ = o.forward_bg_;
  inverse_fg_ = o.inverse_fg_;
  inverse_bg_ = o.inverse_bg_;
  opacity_net_ = o.opacity_net_;
  atlas_ = o.atlas_;
  forward_trained_ = o.forward_trained_;
  inverse_trained_ = o.inverse_trained_;
  opacity_override_ = o.opacity_override_;
  forward_evals_.store(o.forward_evals_.load());
  return *this;
}

template <class T>
ad::Var<T> ModelBundle<T>::forward_uv(ad::Graph<T>& g, ad::Var<T> xyt, Layer layer) const {
  const T ax = static_cast<T>(prior_.ax), ay = static_cast<T>(prior_.ay);
  const T scales[2] = {ax, ay};
  const T offsets[2] = {T(0.5) - T(0.5) * ax, T(0.5) - T(0.5) * ay};
  ad::Var<T> prior = ad::logit(ad::col_affine(ad::slice_cols(xyt, 0, 2), std::span<const T>(scales),
                                              std::span<const T>(offsets)));
  ad::Var<T> z = ad::add(mapper(layer).forward(g, xyt), prior);
  ad::Var<T> s = squash(z);
  const T sq_scale[2] = {T(0.5), T(1)};
  const T sq_offset[2] = {static_cast<T>(layer_u_offset(layer)), T(0)};
  return ad::col_affine(s, std::span<const T>(sq_scale), std::span<const T>(sq_offset));
}

template <class T>
ad::Var<T> ModelBundle<T>::opacity(ad::Graph<T>& g, ad::Var<T> xyt) const {
  if (opacity_override_) {
    return g.constant({xyt.rows(), 1}, std::vector<T>(xyt.rows(), *opacity_override_));
  }
  return squash(opacity_net_.forward(g, xyt));
}

template <class T>
ad::Var<T> ModelBundle<T>::atlas_rgb(ad::Graph<T>& g, ad::Var<T> uv) const {
  return squash(atlas_.forward(g, uv));
}

template <class T>
ad::Var<T> ModelBundle<T>::inverse_xy(ad::Graph<T>& g, ad::Var<T> uvt, Layer layer) const {
  const T to_local_s[3] = {T(2), T(1), T(1)};
  const T to_local_o[3] = {static_cast<T>(-2.0 * layer_u_offset(layer)), T(0), T(0)};
  ad::Var<T> local =
      ad::col_affine(uvt, std::span<const T>(to_local_s), std::span<const T>(to_local_o));
  const T ix = static_cast<T>(1.0 / prior_.ax), iy = static_cast<T>(1.0 / prior_.ay);
  const T ps[2] = {ix, iy};
  const T po[2] = {T(0.5) - T(0.5) * ix, T(0.5) - T(0.5) * iy};
  ad::Var<T> prior =
      ad::col_affine(ad::slice_cols(local, 0, 2), std::span<const T>(ps), std::span<const T>(po));
  return ad::add(inverse(layer).forward(g, local), prior);
}

template <class T>
ad::Var<T> ModelBundle<T>::reconstruct(ad::Graph<T>& g, ad::Var<T> xyt) const {
  ad::Var<T> alpha = opacity(g, xyt);
  ad::Var<T> cf = atlas_rgb(g, forward_uv(g, xyt, Layer::foreground));
  ad::Var<T> cb = atlas_rgb(g, forward_uv(g, xyt, Layer::background));
  return ad::add(ad::mul_rows(cf, alpha), ad::mul_rows(cb, ad::one_minus(alpha)));
}

template <class T>
std::vector<ad::Parameter<T>*> ModelBundle<T>::forward_parameters() {
  std::vector<ad::Parameter<T>*> out;
  forward_fg_.collect(out);
  forward_bg_.collect(out);
  opacity_net_.collect(out);
  atlas_.collect(out);
  return out;
}

template <class T>
std::vector<ad::Parameter<T>*> ModelBundle<T>::inverse_parameters() {
  std::vector<ad::Parameter<T>*> out;
  inverse_fg_.collect(out);
  inverse_bg_.collect(out);
  return out;
}

template <class T>
std::vector<ad::Parameter<T>*> ModelBundle<T>::parameters() {
  auto out = forward_parameters();
  auto inv = inverse_parameters();
  out.insert(out.end(), inv.begin(), inv.end());
  return out;
}

template <class T>
std::vector<const ad::Parameter<T>*> ModelBundle<T>::parameters() const {
  std::vector<const ad::Parameter<T>*> out;
  forward_fg_.collect(out);
  forward_bg_.collect(out);
  opacity_net_.collect(out);
  atlas_.collect(out);
  inverse_fg_.collect(out);
  inverse_bg_.collect(out);
  return out;
}

template <class T>
std::size_t ModelBundle<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->tensor.size();
  return n;
}

template <class T>
template <class U>
void ModelBundle<T>::copy_parameters_from(const ModelBundle<U>& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw ContractViolation("copy_parameters_from: model shapes differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || dst[i]->tensor.shape() != src[i]->tensor.shape())
      throw ContractViolation("copy_parameters_from: parameter '" + src[i]->name + "' mismatch");
    auto d = dst[i]->tensor.values();
    auto s = src[i]->tensor.values();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<T>(s[k]);
  }
}

template <class T>
std::vector<AtlasCoord> ModelBundle<T>::forward_map(std::span<const PixelCoord> pixels,
                                                    Layer layer) const {
  for (const auto& p : pixels) check_pixel(p, dims_);
  std::vector<AtlasCoord> out(pixels.size());
  for_chunks(pixels.size(), [&](std::size_t b, std::size_t e) {
    ad::Graph<T> g(false);
    auto uv = forward_uv(g, g.constant(pixel_tensor<T>(pixels.subspan(b, e - b), dims_)), layer)
                  .value();
    for (std::size_t i = b; i < e; ++i)
      out[i] = AtlasCoord{static_cast<double>(uv[(i - b) * 2]),
                          static_cast<double>(uv[(i - b) * 2 + 1]), layer};
  });
  forward_evals_.fetch_add(pixels.size());
  return out;
}

template <class T>
std::vector<double> ModelBundle<T>::opacity(std::span<const PixelCoord> pixels) const {
  for (const auto& p : pixels) check_pixel(p, dims_);
  std::vector<double> out(pixels.size());
  for_chunks(pixels.size(), [&](std::size_t b, std::size_t e) {
    ad::Graph<T> g(false);
    auto a = opacity(g, g.constant(pixel_tensor<T>(pixels.subspan(b, e - b), dims_))).value();
    for (std::size_t i = b; i < e; ++i) out[i] = static_cast<double>(a[i - b]);
  });
  return out;
}

template <class T>
std::vector<FramePoint> ModelBundle<T>::inverse_map(std::span<const AtlasCoord> coords,
                                                    std::span<const int> frames) const {
  if (coords.size() != frames.size())
    throw ContractViolation("inverse_map: " + std::to_string(coords.size()) + " coords but " +
                            std::to_string(frames.size()) + " frame indices");
  for (int t : frames)
    if (t < 0 || t >= dims_.frames)
      throw ContractViolation("inverse_map: frame " + std::to_string(t) + " out of range");
  std::vector<FramePoint> out(coords.size());
  const double wmax = dims_.width - 1, hmax = dims_.height - 1;
  // Coordinates of one layer go through one network call.
  for (Layer layer : {Layer::foreground, Layer::background}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < coords.size(); ++i)
      if (coords[i].layer == layer) idx.push_back(i);
    for_chunks(idx.size(), [&](std::size_t b, std::size_t e) {
      std::vector<T> in((e - b) * 3);
      for (std::size_t k = b; k < e; ++k) {
        const auto& c = coords[idx[k]];
        in[(k - b) * 3] = static_cast<T>(c.u);
        in[(k - b) * 3 + 1] = static_cast<T>(c.v);
        in[(k - b) * 3 + 2] = static_cast<T>(normalized_time(frames[idx[k]], dims_));
      }
      ad::Graph<T> g(false);
      auto xy = inverse_xy(g, g.constant({e - b, 3}, std::move(in)), layer).value();
      for (std::size_t k = b; k < e; ++k) {
        const double x = static_cast<double>(xy[(k - b) * 2]) * wmax;
        const double y = static_cast<double>(xy[(k - b) * 2 + 1]) * hmax;
        FramePoint fp;
        fp.x = std::clamp(x, 0.0, wmax);
        fp.y = std::clamp(y, 0.0, hmax);
        fp.out_of_frame = !(x >= 0.0 && x <= wmax && y >= 0.0 && y <= hmax);
        out[idx[k]] = fp;
      }
    });
  }
  return out;
}

template <class T>
std::vector<Rgb> ModelBundle<T>::atlas_color(std::span<const AtlasCoord> coords) const {
  std::vector<Rgb> out(coords.size());
  for_chunks(coords.size(), [&](std::size_t b, std::size_t e) {
    std::vector<T> in((e - b) * 2);
    for (std::size_t i = b; i < e; ++i) {
      in[(i - b) * 2] = static_cast<T>(std::clamp(coords[i].u, 0.0, 1.0));
      in[(i - b) * 2 + 1] = static_cast<T>(std::clamp(coords[i].v, 0.0, 1.0));
    }
    ad::Graph<T> g(false);
    auto rgb = atlas_rgb(g, g.constant({e - b, 2}, std::move(in))).value();
    for (std::size_t i = b; i < e; ++i)
      for (int c = 0; c < 3; ++c) out[i][c] = static_cast<float>(rgb[(i - b) * 3 + c]);
  });
  return out;
}

template <class T>
std::vector<Rgb> ModelBundle<T>::reconstruct(std::span<const PixelCoord> pixels) const {
  for (const auto& p : pixels) check_pixel(p, dims_);
  std::vector<Rgb> out(pixels.size());
  for_chunks(pixels.size(), [&](std::size_t b, std::size_t e) {
    ad::Graph<T> g(false);
    auto rgb = reconstruct(g, g.constant(pixel_tensor<T>(pixels.subspan(b, e - b), dims_))).value();
    for (std::size_t i = b; i < e; ++i)
      for (int c = 0; c < 3; ++c) out[i][c] = static_cast<float>(rgb[(i - b) * 3 + c]);
  });
  forward_evals_.fetch_add(2 * pixels.size());
  return out;
}

template class ModelBundle<float>;
template class ModelBundle<double>;
template void ModelBundle<double>::copy_parameters_from<float>(const ModelBundle<float>&);
template void ModelBundle<float>::copy_parameters_from<double>(const ModelBundle<double>&);
template void ModelBundle<float>::copy_parameters_from<float>(const ModelBundle<float>&);

// ---- persistence ----------------------------------------------------------------

namespace {

void put_grid(std::vector<CheckpointField>& f, const std::string& prefix, const HashGridConfig& g) {
  f.push_back({prefix + ".levels", static_cast<std::uint32_t>(g.levels)});
  f.push_back({prefix + ".table_size", g.table_size});
  f.push_back({prefix + ".features", static_cast<std::uint32_t>(g.features)});
  f.push_back({prefix + ".n_min", static_cast<std::uint32_t>(g.n_min)});
  f.push_back({prefix + ".n_max", static_cast<std::uint32_t>(g.n_max)});
}

HashGridConfig get_grid(const Checkpoint& c, const std::string& prefix, int dims) {
  HashGridConfig g;
  g.dims = dims;
  g.levels = static_cast<int>(c.require_u32(prefix + ".levels"));
  g.table_size = c.require_u32(prefix + ".table_size");
  g.features = static_cast<int>(c.require_u32(prefix + ".features"));
  g.n_min = static_cast<int>(c.require_u32(prefix + ".n_min"));
  g.n_max = static_cast<int>(c.require_u32(prefix + ".n_max"));
  return g;
}

}  // namespace

Checkpoint model_checkpoint(const Model& model) {
  Checkpoint c;
  const auto d = model.dims();
  c.fields.push_back({"video.width", static_cast<std::uint32_t>(d.width)});
  c.fields.push_back({"video.height", static_cast<std::uint32_t>(d.height)});
  c.fields.push_back({"video.frames", static_cast<std::uint32_t>(d.frames)});
  put_grid(c.fields, "grid.video", model.config().video_grid);
  put_grid(c.fields, "grid.atlas", model.config().atlas_grid);
  c.fields.push_back({"mlp.width", static_cast<std::uint32_t>(model.config().hidden_width)});
  c.fields.push_back({"mlp.layers", static_cast<std::uint32_t>(model.config().hidden_layers)});
  c.fields.push_back({"seed.low", static_cast<std::uint32_t>(model.seed() & 0xffffffffu)});
  c.fields.push_back({"seed.high", static_cast<std::uint32_t>(model.seed() >> 32)});
  c.fields.push_back({"trained.forward", static_cast<std::uint32_t>(model.forward_ready())});
  c.fields.push_back({"trained.inverse", static_cast<std::uint32_t>(model.inverse_ready())});
  for (const auto* p : model.parameters()) c.params.push_back(to_record(*p));
  return c;
}

Model model_from_checkpoint(const Checkpoint& c) {
  ModelConfig cfg;
  cfg.video_grid = get_grid(c, "grid.video", 3);
  cfg.atlas_grid = get_grid(c, "grid.atlas", 2);
  cfg.hidden_width = static_cast<int>(c.require_u32("mlp.width"));
  cfg.hidden_layers = static_cast<int>(c.require_u32("mlp.layers"));
  VideoDims d{static_cast<int>(c.require_u32("video.width")),
              static_cast<int>(c.require_u32("video.height")),
              static_cast<int>(c.require_u32("video.frames"))};
  const std::uint64_t seed =
      (static_cast<std::uint64_t>(c.require_u32("seed.high")) << 32) | c.require_u32("seed.low");
  Model m = [&] {
    try {
      return Model(cfg, d, seed);
    } catch (const ConfigError& e) {
      throw LoadError(std::string("checkpoint describes an invalid model: ") + e.what());
    }
  }();
  auto params = m.parameters();
  if (params.size() != c.params.size())
    throw LoadError("checkpoint holds " + std::to_string(c.params.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  for (auto* p : params) {
    const CheckpointRecord* rec = c.find(p->name);
    if (!rec) throw LoadError("checkpoint lacks parameter '" + p->name + "'");
    from_record(*rec, *p);
  }
  m.set_forward_trained(c.require_u32("trained.forward") != 0);
  m.set_inverse_trained(c.require_u32("trained.inverse") != 0);
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  write_checkpoint(path, model_checkpoint(model));
}

Model load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(read_checkpoint(path));
}

std::uint64_t parameter_checksum(const Model& model) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto* p : model.parameters()) {
    mix(p->name.data(), p->name.size());
    const auto v = p->tensor.values();
    mix(v.data(), v.size() * sizeof(float));
  }
  return h;
}

void SnapshotSlot::publish(const Model& model, std::uint64_t iteration) {
  auto snap = std::make_shared<ModelSnapshot>();
  auto copy = std::make_shared<Model>(model);
  copy->reset_forward_evaluations();
  snap->checksum = parameter_checksum(*copy);
  snap->model = std::move(copy);
  snap->iteration = iteration;
  std::lock_guard lock(mutex_);
  current_ = std::move(snap);
}

std::shared_ptr<const ModelSnapshot> SnapshotSlot::latest() const {
  std::shared_ptr<const ModelSnapshot> snap;
  {
    std::lock_guard lock(mutex_);
    snap = current_;
  }
  if (snap && !snap->intact())
    throw ContractViolation("parameter snapshot failed its checksum (iteration " +
                            std::to_string(snap->iteration) + ")");
  return snap;
}

}  // namespace inve
