#include <doctest.h>

#include <random>

#include "inve/errors.hpp"
#include "inve/losses.hpp"
#include "inve/render.hpp"
#include "inve/tracking.hpp"
#include "support.hpp"
#include "trained_fixture.hpp"

using namespace inve;

namespace {

bool mask_at(const SyntheticClip& sc, int x, int y, int t) {
  const auto& d = sc.clip.dims;
  if (x < 0 || y < 0 || x >= d.width || y >= d.height) return false;
  return sc.clip.masks[t].data[std::size_t(y) * d.width + x] != 0;
}

// Every pixel within r (Chebyshev) has the same mask value.
bool uniform_within(const SyntheticClip& sc, int x, int y, int t, int r) {
  const bool m = mask_at(sc, x, y, t);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int xx = std::clamp(x + dx, 0, sc.clip.dims.width - 1);
      const int yy = std::clamp(y + dy, 0, sc.clip.dims.height - 1);
      if (mask_at(sc, xx, yy, t) != m) return false;
    }
  return true;
}

// Centroid of the pixels whose colour differs between two frames.
std::optional<std::array<double, 2>> changed_centroid(const RgbImage& a, const RgbImage& b) {
  double sx = 0, sy = 0, n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      if (a.at(x, y) != b.at(x, y)) {
        sx += x;
        sy += y;
        n += 1;
      }
  if (n == 0) return std::nullopt;
  return std::array<double, 2>{sx / n, sy / n};
}

}  // namespace

TEST_CASE("trained: reconstruction PSNR reaches 30 dB") {
  const auto& t = test::trained();
  CHECK(t.model.forward_ready());
  CHECK(t.model.inverse_ready());
  const double psnr = reconstruction_psnr(t.model, t.scene.clip);
  MESSAGE("PSNR " << psnr << " dB");
  CHECK(psnr >= 30.0);
}

TEST_CASE("trained: round trip over held-out subpixel positions") {
  const auto& t = test::trained();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> ux(0, 63), uy(0, 63);
  std::uniform_int_distribution<int> ut(0, 7);
  std::vector<PixelCoord> px(10000);
  for (auto& p : px) p = {ux(rng), uy(rng), ut(rng)};
  const double err = round_trip_error(t.model, px);
  MESSAGE("round trip " << err << " px");
  CHECK(err <= 1.0);
}

TEST_CASE("trained: fg point follows the square; bg point stays put") {
  const auto& t = test::trained();
  const auto tr = track_point(10, 10, 0, Layer::foreground, t.model);
  REQUIRE(tr.points.size() == 8);
  for (int f = 0; f < 8; ++f) {
    const auto gt = t.scene.track(10, 10, 0, f);
    CHECK(std::hypot(tr.at(f).x - gt[0], tr.at(f).y - gt[1]) <= 1.5);
  }
  CHECK(std::hypot(tr.at(5).x - 20, tr.at(5).y - 15) <= 1.5);

  for (auto [x, y] : {std::pair{50.0, 50.0}, std::pair{5.0, 58.0}, std::pair{58.0, 6.0}}) {
    const auto bg = track_point(x, y, 0, Layer::background, t.model);
    double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
    for (const auto& p : bg.points) {
      lo_x = std::min(lo_x, p.x);
      hi_x = std::max(hi_x, p.x);
      lo_y = std::min(lo_y, p.y);
      hi_y = std::max(hi_y, p.y);
    }
    CHECK(hi_x - lo_x < 1.0);
    CHECK(hi_y - lo_y < 1.0);
  }

  const auto one = track_point(30, 30, 4, Layer::background, t.model, 4, 4);
  REQUIRE(one.points.size() == 1);
  CHECK(std::hypot(one.points[0].x - 30, one.points[0].y - 30) <= 1.0);
  CHECK_THROWS_AS(track_point(30, 30, 0, Layer::background, t.model, 5, 3), ContractViolation);
  CHECK_THROWS_AS(track_point(64, 30, 0, Layer::background, t.model), ContractViolation);
}

TEST_CASE("trained: background inverse map of a fixed uv is static") {
  const auto& t = test::trained();
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> u(0.15, 0.35), v(0.4, 0.6);
  for (int i = 0; i < 50; ++i) {
    std::vector<AtlasCoord> uv(8, AtlasCoord{u(rng), v(rng), Layer::background});
    std::vector<int> frames = {0, 1, 2, 3, 4, 5, 6, 7};
    const auto pts = t.model.inverse_map(uv, frames);
    double spread = 0;
    for (const auto& a : pts)
      for (const auto& b : pts) spread = std::max(spread, std::hypot(a.x - b.x, a.y - b.y));
    CHECK(spread < 1.0);
  }
}

TEST_CASE("trained: flow-related pixels share an atlas point") {
  const auto& t = test::trained();
  const auto& sc = t.scene;
  double worst_fg = 0, worst_bg = 0;
  std::size_t n = 0;
  for (int f = 0; f + 1 < 8; ++f)
    for (int y = 0; y < 64; y += 3)
      for (int x = 0; x < 64; x += 3) {
        if (!uniform_within(sc, x, y, f, 2)) continue;
        const bool fg = mask_at(sc, x, y, f);
        const auto to = sc.track(x, y, f, f + 1);
        const int x1 = int(std::lround(to[0])), y1 = int(std::lround(to[1]));
        if (!fg && !uniform_within(sc, x1, y1, f + 1, 2)) continue;
        const Layer l = fg ? Layer::foreground : Layer::background;
        const PixelCoord pair[] = {{double(x), double(y), f}, {to[0], to[1], f + 1}};
        const auto uv = t.model.forward_map(pair, l);
        const double d = std::hypot(uv[0].u - uv[1].u, uv[0].v - uv[1].v);
        (fg ? worst_fg : worst_bg) = std::max(fg ? worst_fg : worst_bg, d);
        ++n;
      }
  MESSAGE("worst atlas distance fg " << worst_fg << " bg " << worst_bg << " over " << n << " pairs");
  CHECK(worst_fg <= 0.005);
  CHECK(worst_bg <= 0.005);

  std::mt19937_64 rng(103);
  const auto batch = sample_batch(sc.clip.dims, 4096, rng);
  ad::Graph<float> g(false);
  for (Layer l : {Layer::foreground, Layer::background}) {
    const auto r = consistency_loss(g, t.model, sc.clip, batch, l, true);
    MESSAGE(layer_name(l) << " consistency " << r.loss.item() << " over " << r.valid);
    CHECK(r.valid > 1000);
    CHECK(r.loss.item() < 1e-4);
  }
}

TEST_CASE("trained: opacity separates the shape from the background") {
  const auto& t = test::trained();
  const auto& sc = t.scene;
  std::vector<PixelCoord> px;
  std::vector<char> inside;
  for (int f = 0; f < 8; ++f)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (!uniform_within(sc, x, y, f, 2)) continue;
        px.push_back({double(x), double(y), f});
        inside.push_back(mask_at(sc, x, y, f));
      }
  const auto alpha = t.model.opacity(px);
  std::size_t good = 0;
  for (std::size_t i = 0; i < px.size(); ++i) good += inside[i] ? alpha[i] > 0.9 : alpha[i] < 0.1;
  const double frac = double(good) / double(px.size());
  MESSAGE("opacity correct on " << frac * 100 << "% of " << px.size() << " pixels");
  CHECK(frac >= 0.95);
}

TEST_CASE("trained: a frame-0 sketch lands at the displaced position in every frame") {
  const auto& t = test::trained();
  const auto& sc = t.scene;
  SketchStroke s;
  s.frame = 0;
  s.layer = Layer::foreground;
  s.points = {{9, 10}, {12, 11}, {15, 13}};
  s.color = {1, 0, 1};
  s.width = 2 * atlas_units_per_pixel(sc.clip.dims);
  prepare_stroke(s, &t.model);
  EditDocument doc;
  doc.add(s);
  // centroid of the drawn polyline, sampled densely
  double mx = 0, my = 0, len = 0;
  for (std::size_t i = 0; i + 1 < s.points.size(); ++i) {
    const double l = std::hypot(s.points[i + 1].x - s.points[i].x, s.points[i + 1].y - s.points[i].y);
    mx += l * (s.points[i].x + s.points[i + 1].x) / 2;
    my += l * (s.points[i].y + s.points[i + 1].y) / 2;
    len += l;
  }
  mx /= len;
  my /= len;
  const auto edited = render_edited_clip(doc, t.model, sc.clip);
  for (int f = 0; f < 8; ++f) {
    const auto c = changed_centroid(edited.frames[f], sc.clip.frames[f]);
    REQUIRE(c);
    const auto gt = sc.track(mx, my, 0, f);
    CHECK(std::hypot((*c)[0] - gt[0], (*c)[1] - gt[1]) <= 1.5);
  }
}

TEST_CASE("trained: fg sketch leaves low-opacity pixels alone") {
  const auto& t = test::trained();
  const auto& sc = t.scene;
  EditDocument doc;
  SketchStroke s;
  s.space = CoordSpace::atlas;
  s.layer = Layer::foreground;
  s.color = {0, 1, 0};
  s.width = 0.08;
  s.points = {{0.55, 0.1}, {0.95, 0.9}, {0.55, 0.9}, {0.95, 0.1}};
  prepare_stroke(s, nullptr);
  doc.add(s);
  const auto out = render_edited_clip(doc, t.model, sc.clip);
  std::size_t checked = 0, changed = 0;
  for (int f = 0; f < 8; ++f) {
    std::vector<PixelCoord> px;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) px.push_back({double(x), double(y), f});
    const auto alpha = t.model.opacity(px);
    for (std::size_t i = 0; i < px.size(); ++i) {
      const int x = int(px[i].x), y = int(px[i].y);
      const std::size_t o = (std::size_t(y) * 64 + x) * 3;
      int diff = 0;
      for (int k = 0; k < 3; ++k)
        diff = std::max(diff, std::abs(int(out.frames[f].data[o + k]) - int(sc.clip.frames[f].data[o + k])));
      changed += diff > 0;
      if (alpha[i] >= 0.01) continue;
      ++checked;
      if (diff > 1) MESSAGE("t=" << f << " (" << x << "," << y << ") alpha " << alpha[i] << " mask " << mask_at(sc, x, y, f));
      CHECK(diff <= 1);
    }
  }
  CHECK(checked > 10000);
  CHECK(changed > 100);
}

TEST_CASE("trained: documents render deterministically") {
  const auto& t = test::trained();
  EditDocument doc;
  SketchStroke s;
  s.frame = 2;
  s.layer = Layer::background;
  s.points = {{40, 40}, {50, 45}};
  s.width = 0.01;
  prepare_stroke(s, &t.model);
  doc.add(s);
  const auto a = render_edited_frame(3, doc, t.model, t.scene.clip);
  const auto b = render_edited_frame(3, doc, t.model, t.scene.clip);
  CHECK(a.frames[0] == b.frames[0]);
}

TEST_CASE("constant-colour clip: atlas colour at mapped coordinates") {
  SyntheticSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.frames = 4;
  spec.size = 8;
  spec.start_x = 8;
  spec.start_y = 8;
  const Rgb color{0.2f, 0.6f, 0.4f};
  spec.foreground_color = color;
  spec.background_color = color;
  const auto sc = generate_synthetic(spec);
  TrainConfig c = TrainConfig::desk();
  c.forward_iters = 600;
  c.inverse_iters = 0;
  c.batch = 1024;
  Model m(ModelConfig::desk(), sc.clip.dims, 7);
  train_forward_phase(sc.clip, m, c);
  std::vector<PixelCoord> px;
  for (int f = 0; f < 4; ++f)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) px.push_back({double(x), double(y), f});
  const auto alpha = m.opacity(px);
  const auto fg = m.atlas_color(m.forward_map(px, Layer::foreground));
  const auto bg = m.atlas_color(m.forward_map(px, Layer::background));
  double worst = 0;
  for (std::size_t i = 0; i < px.size(); ++i) {
    const Rgb& a = alpha[i] >= 0.5 ? fg[i] : bg[i];
    for (int k = 0; k < 3; ++k) worst = std::max(worst, double(std::abs(a[k] - color[k])));
  }
  MESSAGE("worst atlas colour error " << worst * 255 << "/255");
  CHECK(worst <= 2.0 / 255);
}
