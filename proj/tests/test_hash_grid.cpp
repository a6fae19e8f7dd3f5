#include <doctest.h>

#include <cmath>
#include <random>

#include "inve/atlas_model.hpp"
#include "inve/errors.hpp"
#include "inve/hash_grid.hpp"
#include "oracles.hpp"

using namespace inve;
using namespace inve::ad;
using namespace inve::test;

namespace {

std::vector<float> encode_one(const HashGrid<float>& grid, std::vector<float> p) {
  Graph<float> g(false);
  auto v = grid.encode(g, g.constant({1, p.size()}, p)).value();
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("hash_index: origin is row zero on every level") {
  HashGridConfig cfg{3, 8, 1u << 14, 2, 16, 512};
  const std::uint32_t zero[3] = {0, 0, 0};
  for (int l = 0; l < cfg.levels; ++l) CHECK(hash_index(zero, l, cfg) == 0);
}

TEST_CASE("hash_index: dense regime is row-major") {
  HashGridConfig cfg{2, 1, 1u << 14, 2, 4, 4};
  const std::uint32_t c[2] = {2, 3};
  CHECK(hash_index(c, 0, cfg) == 17);
}

TEST_CASE("hash_index: sparse regime equals the XOR/mod formula") {
  HashGridConfig cfg{3, 8, 1u << 14, 2, 16, 512};
  const int l = cfg.levels - 1;
  REQUIRE_FALSE(cfg.dense(l));
  const std::uint32_t c[3] = {1, 2, 3};
  const std::uint32_t direct = (1u * 1u ^ 2u * 2654435761u ^ 3u * 805459861u) % (1u << 14);
  CHECK(hash_index(c, l, cfg) == direct);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const int lv = int(rng() % cfg.levels);
    const int n = cfg.resolution(lv);
    std::vector<std::uint32_t> cell(3);
    for (auto& v : cell) v = std::uint32_t(rng() % (n + 1));
    CHECK(hash_index(cell, lv, cfg) == oracle_index(cell, n, cfg.table_size));
  }
}

TEST_CASE("hash_index: out-of-range level or coordinate is a contract violation") {
  HashGridConfig cfg{2, 4, 1u << 10, 2, 4, 32};
  const std::uint32_t c[2] = {0, 0};
  CHECK_THROWS_AS(hash_index(c, 4, cfg), ContractViolation);
  CHECK_THROWS_AS(hash_index(c, -1, cfg), ContractViolation);
  const std::uint32_t far[2] = {5, 0};
  CHECK_THROWS_AS(hash_index(far, 0, cfg), ContractViolation);
}

TEST_CASE("config: invariants and resolutions") {
  HashGridConfig cfg{3, 8, 1u << 14, 2, 16, 512};
  CHECK(cfg.resolution(0) == 16);
  CHECK(cfg.resolution(7) == 512);
  for (int l = 1; l < cfg.levels; ++l) CHECK(cfg.resolution(l) >= cfg.resolution(l - 1));
  CHECK(cfg.output_dim() == 16);
  CHECK_THROWS_AS((HashGridConfig{3, 8, 1000, 2, 16, 512}.validate()), ConfigError);
  CHECK_THROWS_AS((HashGridConfig{3, 0, 1024, 2, 16, 512}.validate()), ConfigError);
  CHECK_THROWS_AS((HashGridConfig{3, 2, 1024, 0, 16, 512}.validate()), ConfigError);
  CHECK_THROWS_AS((HashGridConfig{3, 2, 1024, 2, 64, 32}.validate()), ConfigError);
  std::mt19937_64 rng(1);
  HashGrid<float> grid("g", cfg, rng);
  for (int l = 0; l < cfg.levels; ++l) {
    const auto& shape = grid.tables()[l].tensor.shape();
    const double verts = std::pow(cfg.resolution(l) + 1.0, 3);
    CHECK(shape[0] == std::size_t(std::min<double>(verts, cfg.table_size)));
    CHECK(shape[1] == 2);
    CHECK(grid.tables()[l].group == ParamGroup::hash_table);
  }
}

TEST_CASE("encode: vertex returns the stored feature, edge midpoint the mean") {
  HashGridConfig cfg{2, 1, 1u << 10, 2, 4, 4};
  std::mt19937_64 rng(2);
  HashGrid<float> grid("g", cfg, rng);
  randomize(grid, rng);
  const auto vals = grid.tables()[0].tensor.values();
  // vertex (1, 2) of a 4-cell grid sits at (0.25, 0.5)
  auto at = encode_one(grid, {0.25f, 0.5f});
  const std::uint32_t c12[2] = {1, 2}, c22[2] = {2, 2};
  const auto r12 = hash_index(c12, 0, cfg), r22 = hash_index(c22, 0, cfg);
  CHECK(at[0] == vals[r12 * 2]);
  CHECK(at[1] == vals[r12 * 2 + 1]);
  auto mid = encode_one(grid, {0.375f, 0.5f});
  CHECK(mid[0] == doctest::Approx((vals[r12 * 2] + vals[r22 * 2]) / 2.0).epsilon(1e-6));
  CHECK(mid[1] == doctest::Approx((vals[r12 * 2 + 1] + vals[r22 * 2 + 1]) / 2.0).epsilon(1e-6));
}

TEST_CASE("encode: 1000 random points match brute-force d-linear interpolation") {
  for (int dims : {2, 3}) {
    HashGridConfig cfg{dims, 6, 1u << 12, 2, 4, 96};
    std::mt19937_64 rng(10 + dims);
    HashGrid<double> grid("g", cfg, rng);
    randomize(grid, rng);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> pts(1000 * dims);
    for (auto& v : pts) v = u(rng);
    Graph<double> g(false);
    auto enc = grid.encode(g, g.constant({1000, std::size_t(dims)}, pts)).value();
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> p(pts.begin() + i * dims, pts.begin() + (i + 1) * dims);
      const auto ref = oracle_encode(grid, p);
      for (std::size_t k = 0; k < ref.size(); ++k)
        worst = std::max(worst, std::abs(double(enc[i * ref.size() + k]) - ref[k]));
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("encode: out-of-range inputs are clamped") {
  HashGridConfig cfg{2, 3, 1u << 10, 2, 4, 16};
  std::mt19937_64 rng(4);
  HashGrid<float> grid("g", cfg, rng);
  randomize(grid, rng);
  CHECK(encode_one(grid, {-0.5f, 1.7f}) == encode_one(grid, {0.0f, 1.0f}));
}

TEST_CASE("encode: continuous across cell boundaries") {
  HashGridConfig cfg{3, 6, 1u << 12, 2, 16, 128};
  std::mt19937_64 rng(6);
  HashGrid<float> grid("g", cfg, rng);
  // a jump at a boundary would be of the order of the feature scale
  randomize(grid, rng, 0.1f);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  const double eps = 1e-5;
  for (int trial = 0; trial < 200; ++trial) {
    // a coarsest-level cell boundary
    const int n = cfg.resolution(0);
    const double b = std::round(u(rng) * n) / n;
    const float y = float(u(rng)), z = float(u(rng));
    auto lo = encode_one(grid, {float(b - eps), y, z});
    auto hi = encode_one(grid, {float(b + eps), y, z});
    double diff = 0;
    for (std::size_t k = 0; k < lo.size(); ++k) diff = std::max(diff, double(std::abs(lo[k] - hi[k])));
    CHECK(diff < 1e-3);
  }
}

TEST_CASE("encode: table entries stay finite under optimization") {
  HashGridConfig cfg{2, 4, 1u << 10, 2, 4, 64};
  std::mt19937_64 rng(8);
  HashGrid<float> grid("g", cfg, rng);
  std::vector<Parameter<float>*> ps;
  for (auto& t : grid.tables()) ps.push_back(&t);
  std::uniform_real_distribution<float> u(0, 1);
  for (int step = 0; step < 300; ++step) {
    for (auto* p : ps) p->tensor.zero_grad();
    std::vector<float> pts(256 * 2);
    for (auto& v : pts) v = u(rng);
    Graph<float> g;
    auto f = grid.encode(g, g.constant({256, 2}, pts));
    g.backward(mean(square(add_scalar(f, 10.0f))));
    adam_step<float>(ps, 1e-1, 0.9, 0.99, 1e-15);
  }
  for (auto* p : ps)
    for (float v : p->tensor.values()) REQUIRE(std::isfinite(v));
}

TEST_CASE("sinusoidal: zero input, output width and direct evaluation") {
  Graph<double> g;
  const int f = 5;
  auto z = sinusoidal_encode(g.constant({1, 3}, {0, 0, 0}), f).value();
  REQUIRE(z.size() == 3 * 2 * f);
  for (int d = 0; d < 3; ++d)
    for (int k = 0; k < f; ++k) {
      CHECK(z[(d * f + k) * 2] == 0.0);
      CHECK(z[(d * f + k) * 2 + 1] == 1.0);
    }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const double p[2] = {u(rng), u(rng)};
  auto v = sinusoidal_encode(g.constant({1, 2}, {p[0], p[1]}), f).value();
  REQUIRE(v.size() == 2 * 2 * f);
  for (int d = 0; d < 2; ++d)
    for (int k = 0; k < f; ++k) {
      const double a = std::pow(2.0, k) * M_PI * p[d];
      CHECK(v[(d * f + k) * 2] == doctest::Approx(std::sin(a)).epsilon(1e-12));
      CHECK(v[(d * f + k) * 2 + 1] == doctest::Approx(std::cos(a)).epsilon(1e-12));
    }
}

TEST_CASE("parameter budget: paper profile on a 768x432x70 clip is near 1.7M") {
  Model m(ModelConfig::paper(), VideoDims{768, 432, 70}, 1);
  const double n = double(m.parameter_count());
  MESSAGE("paper-profile parameters: " << n);
  CHECK(std::abs(n - 1.7e6) / 1.7e6 <= 0.15);
}
