#include <doctest.h>

#include <cstring>
#include <random>
#include <thread>

#include "inve/atlas_model.hpp"
#include "inve/checkpoint.hpp"
#include "inve/errors.hpp"
#include "support.hpp"

using namespace inve;

namespace {

const VideoDims kDims{64, 64, 8};

std::vector<PixelCoord> random_pixels(std::size_t n, std::uint64_t seed, const VideoDims& d = kDims) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0, d.width - 1), uy(0, d.height - 1);
  std::uniform_int_distribution<int> ut(0, d.frames - 1);
  std::vector<PixelCoord> out(n);
  for (auto& p : out) p = {ux(rng), uy(rng), ut(rng)};
  return out;
}

// Nudges every parameter so the networks are far from their initial state.
void perturb(Model& m, std::uint64_t seed, float scale = 0.5f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0, scale);
  for (auto* p : m.parameters())
    for (auto& v : p->tensor.values()) v += n(rng) * (p->group == ad::ParamGroup::hash_table ? 1.0f : 0.2f);
}

}  // namespace

TEST_CASE("forward_map stays inside the layer square; layers are disjoint") {
  Model m(ModelConfig::desk(), kDims, 3);
  perturb(m, 1);
  const auto px = random_pixels(100000, 2);
  for (Layer l : {Layer::foreground, Layer::background}) {
    const auto uv = m.forward_map(px, l);
    std::size_t outside = 0, other = 0;
    for (const auto& c : uv) {
      outside += !in_layer_square(c.u, c.v, l);
      other += in_layer_square(c.u, c.v, l == Layer::foreground ? Layer::background : Layer::foreground);
    }
    CHECK(outside == 0);
    CHECK(other == 0);
  }
}

TEST_CASE("opacity and atlas colours are strictly inside the unit range") {
  Model m(ModelConfig::desk(), kDims, 4);
  perturb(m, 2, 3.0f);
  const auto px = random_pixels(10000, 3);
  for (double a : m.opacity(px)) {
    CHECK(a > 0.0);
    CHECK(a < 1.0);
  }
  std::vector<AtlasCoord> uv;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  for (int i = 0; i < 10000; ++i) uv.push_back({u(rng), u(rng), Layer::foreground});
  for (const auto& c : m.atlas_color(uv))
    for (float v : c) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
}

TEST_CASE("queries are deterministic") {
  Model m(ModelConfig::desk(), kDims, 5);
  perturb(m, 3);
  const auto px = random_pixels(500, 4);
  const auto a = m.forward_map(px, Layer::foreground), b = m.forward_map(px, Layer::foreground);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].u == b[i].u);
    CHECK(a[i].v == b[i].v);
  }
  CHECK(m.opacity(px) == m.opacity(px));
}

TEST_CASE("out-of-bounds pixels are contract violations") {
  Model m(ModelConfig::desk(), kDims, 1);
  const PixelCoord bad[] = {{64, 0, 0}};
  CHECK_THROWS_AS(m.forward_map(bad, Layer::foreground), ContractViolation);
  const PixelCoord late[] = {{0, 0, 8}};
  CHECK_THROWS_AS(m.opacity(late), ContractViolation);
  const AtlasCoord c[] = {{0.7, 0.5, Layer::foreground}};
  const int t[] = {9};
  CHECK_THROWS_AS(m.inverse_map(c, t), ContractViolation);
}

TEST_CASE("reconstruct: forced opacity selects one branch; blend identity holds") {
  Model m(ModelConfig::desk(), kDims, 6);
  perturb(m, 5);
  const auto px = random_pixels(300, 6);
  const auto fg = m.atlas_color(m.forward_map(px, Layer::foreground));
  const auto bg = m.atlas_color(m.forward_map(px, Layer::background));
  m.set_opacity_override(1.0f);
  auto r1 = m.reconstruct(px);
  m.set_opacity_override(0.0f);
  auto r0 = m.reconstruct(px);
  for (std::size_t i = 0; i < px.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      CHECK(r1[i][c] == fg[i][c]);
      CHECK(r0[i][c] == bg[i][c]);
    }
  m.set_opacity_override(std::nullopt);
  const auto alpha = m.opacity(px);
  const auto r = m.reconstruct(px);
  double worst = 0;
  for (std::size_t i = 0; i < px.size(); ++i)
    for (int c = 0; c < 3; ++c)
      worst = std::max(worst, std::abs(r[i][c] - (alpha[i] * fg[i][c] + (1 - alpha[i]) * bg[i][c])));
  CHECK(worst <= 1e-6);
}

TEST_CASE("reconstruct: half opacity blends red and green to (0.5, 0.5, 0)") {
  ad::Graph<double> g;
  auto alpha = g.constant({1, 1}, {0.5});
  auto cf = g.constant({1, 3}, {1, 0, 0});
  auto cb = g.constant({1, 3}, {0, 1, 0});
  auto out = ad::add(ad::mul_rows(cf, alpha), ad::mul_rows(cb, ad::one_minus(alpha))).value();
  CHECK(out[0] == 0.5);
  CHECK(out[1] == 0.5);
  CHECK(out[2] == 0.0);
}

TEST_CASE("inverse_map clamps to the frame and flags the clamp") {
  Model m(ModelConfig::desk(), kDims, 7);
  perturb(m, 7, 1.0f);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<AtlasCoord> cs;
  std::vector<int> ts;
  for (int i = 0; i < 5000; ++i) {
    const Layer l = i % 2 ? Layer::foreground : Layer::background;
    cs.push_back({layer_u_offset(l) + 0.5 * u(rng), u(rng), l});
    ts.push_back(i % kDims.frames);
  }
  std::size_t flagged = 0;
  for (const auto& p : m.inverse_map(cs, ts)) {
    CHECK(p.x >= 0);
    CHECK(p.x <= 63);
    CHECK(p.y >= 0);
    CHECK(p.y <= 63);
    flagged += p.out_of_frame;
  }
  MESSAGE("clamped points: " << flagged);
}

TEST_CASE("d(u,v)/d(x,y) from autodiff matches finite differences") {
  ModelBundle<double> m(ModelConfig::desk(), kDims, 9);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 0.5);
  for (auto* p : m.parameters())
    for (auto& v : p->tensor.values()) v += n(rng) * (p->group == ad::ParamGroup::hash_table ? 1.0 : 0.2);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const double x = u(rng), y = u(rng), t = u(rng);
    const Layer l = trial % 2 ? Layer::foreground : Layer::background;
    for (int out = 0; out < 2; ++out) {
      ad::Graph<double> g2;
      auto in2 = g2.input(ad::Tensor<double>({1, 3}, {x, y, t}));
      g2.backward(ad::slice_cols(m.forward_uv(g2, in2, l), out, out + 1));
      for (int axis = 0; axis < 2; ++axis) {
        const double h = 1e-6;
        auto eval = [&](double dx) {
          ad::Graph<double> g3(false);
          std::vector<double> p = {x, y, t};
          p[axis] += dx;
          return m.forward_uv(g3, g3.constant({1, 3}, p), l).value()[out];
        };
        const double fd = (eval(h) - eval(-h)) / (2 * h);
        const double an = g2.grad(in2)[axis];
        CHECK(std::abs(an - fd) <= 1e-3 * std::max(std::abs(fd), 1e-3));
        ++checked;
      }
    }
  }
  CHECK(checked == 200);
}

TEST_CASE("checkpoint: round trip preserves parameters and optimizer state") {
  Model m(ModelConfig::desk(), kDims, 11);
  perturb(m, 11);
  m.set_forward_trained(true);
  for (auto* p : m.parameters()) {
    p->adam.first.assign(p->tensor.size(), 0.25f);
    p->adam.second.assign(p->tensor.size(), 0.5f);
    p->adam.step = 17;
  }
  test::TempDir dir("ckpt");
  save_model(dir.path / "m.ckpt", m);
  const Model back = load_model(dir.path / "m.ckpt");
  CHECK(back.forward_ready());
  CHECK_FALSE(back.inverse_ready());
  CHECK(back.dims() == m.dims());
  CHECK(parameter_checksum(back) == parameter_checksum(m));
  auto a = m.parameters();
  auto b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(b[i]->adam.step == 17);
    CHECK(b[i]->adam.first == a[i]->adam.first);
  }
}

TEST_CASE("checkpoint: header layout and bad input") {
  Checkpoint c;
  c.fields.push_back({"dims", std::uint32_t(3)});
  c.fields.push_back({"scale", 0.5f});
  CheckpointRecord r;
  r.name = "w";
  r.shape = {2, 2};
  r.values = {1, 2, 3, 4};
  c.params.push_back(r);
  auto bytes = encode_checkpoint(c);
  REQUIRE(bytes.size() > 8);
  CHECK(std::memcmp(bytes.data(), "INVE", 4) == 0);
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == kCheckpointVersion);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.require_u32("dims") == 3);
  CHECK(back.f32("scale") == 0.5f);
  CHECK(back.find("w")->values == r.values);
  CHECK_THROWS_AS(back.require_u32("missing"), LoadError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), LoadError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(cut), LoadError);
}

TEST_CASE("snapshots: readers see whole snapshots while a writer publishes") {
  Model m(ModelConfig::desk(), VideoDims{16, 16, 2}, 12);
  SnapshotSlot slot;
  CHECK(slot.latest() == nullptr);
  slot.publish(m, 0);
  std::atomic<bool> done{false};
  std::thread writer([&] {
    Model w = m;
    for (int i = 1; i <= 30; ++i) {
      for (auto* p : w.parameters())
        for (auto& v : p->tensor.values()) v += 1e-3f;
      slot.publish(w, std::uint64_t(i));
    }
    done = true;
  });
  std::uint64_t last = 0;
  int reads = 0;
  while (!done || reads < 5) {
    auto s = slot.latest();
    REQUIRE(s);
    CHECK(s->intact());
    CHECK(s->iteration >= last);
    last = s->iteration;
    ++reads;
  }
  writer.join();
  CHECK(slot.latest()->iteration == 30);
}

TEST_CASE("layer names and prior") {
  CHECK(parse_layer("fg") == Layer::foreground);
  CHECK(parse_layer("background") == Layer::background);
  CHECK_THROWS_AS(parse_layer("mid"), ConfigError);
  const auto p = MappingPrior::for_dims({64, 32, 4});
  // equal atlas extent per pixel along both axes
  CHECK(0.5 * p.ax / 63 == doctest::Approx(p.ay / 31));
  CHECK_THROWS_AS(ModelConfig::named("huge"), ConfigError);
}
