#include <doctest.h>

#include <cmath>
#include <random>

#include "inve/autodiff.hpp"
#include "inve/errors.hpp"
#include "inve/network.hpp"

using namespace inve;
using namespace inve::ad;

namespace {

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("affine: zero weights give the bias on every row") {
  Graph<double> g;
  auto x = g.constant({3, 2}, {1, 2, 3, 4, 5, 6});
  auto w = g.constant({2, 2}, {0, 0, 0, 0});
  auto b = g.constant({2}, {7, -1});
  auto y = affine(x, w, b).value();
  for (int i = 0; i < 3; ++i) {
    CHECK(y[i * 2] == 7);
    CHECK(y[i * 2 + 1] == -1);
  }
}

TEST_CASE("affine: identity weights reproduce the input") {
  Graph<double> g;
  auto x = g.constant({2, 2}, {1.5, -2, 3, 0.25});
  auto y = affine(x, g.constant({2, 2}, {1, 0, 0, 1}), g.constant({2}, {0, 0})).value();
  CHECK(std::vector<double>(y.begin(), y.end()) == std::vector<double>{1.5, -2, 3, 0.25});
}

TEST_CASE("affine: matches a triple-loop product") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto xv = random_values(rng, 12), wv = random_values(rng, 6), bv = random_values(rng, 2);
    Graph<float> g;
    std::vector<float> xf(xv.begin(), xv.end()), wf(wv.begin(), wv.end()), bf(bv.begin(), bv.end());
    auto y = affine(g.constant({4, 3}, xf), g.constant({3, 2}, wf), g.constant({2}, bf)).value();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) {
        double ref = bv[j];
        for (int k = 0; k < 3; ++k) ref += double(xf[i * 3 + k]) * double(wf[k * 2 + j]);
        CHECK(std::abs(y[i * 2 + j] - ref) <= 1e-6);
      }
  }
}

TEST_CASE("affine: shape mismatch names both shapes") {
  Graph<float> g;
  auto x = g.constant({4, 3}, std::vector<float>(12, 1));
  auto w = g.constant({2, 2}, std::vector<float>(4, 1));
  auto b = g.constant({2}, std::vector<float>(2, 0));
  try {
    affine(x, w, b);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    const std::string m = e.what();
    CHECK(m.find("[4,3]") != std::string::npos);
    CHECK(m.find("[2,2]") != std::string::npos);
  }
}

TEST_CASE("activations: fixed values and unknown names") {
  Graph<double> g;
  CHECK(activation(g.constant({1}, {-2.0}), Activation::relu).item() == 0.0);
  CHECK(activation(g.constant({1}, {0.0}), Activation::tanh).item() == 0.0);
  CHECK(activation(g.constant({1}, {0.0}), Activation::sigmoid).item() == 0.5);
  CHECK(parse_activation("tanh") == Activation::tanh);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("activations: tanh derivative matches central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-2, 2);
  for (int i = 0; i < 200; ++i) {
    const double x0 = d(rng);
    Graph<double> g;
    auto x = g.input(Tensor<double>({1}, {x0}));
    g.backward(sum(activation(x, Activation::tanh)));
    const double analytic = g.grad(x)[0];
    const double h = 1e-4;
    const double fd = (std::tanh(x0 + h) - std::tanh(x0 - h)) / (2 * h);
    CHECK(std::abs(analytic - fd) / std::max(std::abs(fd), 1e-12) <= 1e-5);
  }
}

TEST_CASE("backward: root gradient is exactly one") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({3}, {1, 2, 3}));
  auto s = sum(square(x));
  g.backward(s);
  REQUIRE(g.grad(s).size() == 1);
  CHECK(g.grad(s)[0] == 1.0);
}

TEST_CASE("backward: sum of a parameter gives all-ones, unrelated parameter all-zeros") {
  Parameter<double> p("p", Tensor<double>({4}, {1, 2, 3, 4}), ParamGroup::network);
  Parameter<double> q("q", Tensor<double>({2}, {5, 6}), ParamGroup::network);
  p.tensor.zero_grad();
  q.tensor.zero_grad();
  Graph<double> g;
  auto pv = g.param(p);
  g.param(q);
  g.backward(sum(pv));
  for (double v : p.tensor.grad()) CHECK(v == 1.0);
  for (double v : q.tensor.grad()) CHECK(v == 0.0);
}

TEST_CASE("backward: non-scalar root is rejected") {
  Graph<double> g;
  auto x = g.input(Tensor<double>({2}, {1, 2}));
  CHECK_THROWS_AS(g.backward(square(x)), ContractViolation);
}

TEST_CASE("backward: two calls accumulate exactly twice the gradient") {
  std::mt19937_64 rng(9);
  Mlp<float> mlp("m", MlpConfig{3, 8, 2, 2}, rng);
  std::vector<Parameter<float>*> ps;
  mlp.collect(ps);
  auto run = [&] {
    Graph<float> g;
    auto x = g.constant({5, 3}, std::vector<float>{0.1f, 0.2f, 0.3f, -0.5f, 0.4f, 0.9f, 0.0f, 1.0f,
                                                   -1.0f, 0.25f, 0.5f, 0.75f, 0.3f, 0.3f, 0.3f});
    g.backward(mean(square(mlp.forward(g, x))));
  };
  for (auto* p : ps) p->tensor.zero_grad();
  run();
  std::vector<std::vector<float>> once;
  for (auto* p : ps) once.emplace_back(p->tensor.grad().begin(), p->tensor.grad().end());
  run();
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t k = 0; k < once[i].size(); ++k) CHECK(ps[i]->tensor.grad()[k] == 2 * once[i][k]);
}

TEST_CASE("determinism: same seed and ops give bit-identical values and gradients") {
  auto run = [] {
    std::mt19937_64 rng(42);
    Mlp<float> mlp("m", MlpConfig{2, 16, 2, 3}, rng);
    std::vector<Parameter<float>*> ps;
    mlp.collect(ps);
    for (auto* p : ps) p->tensor.zero_grad();
    Graph<float> g;
    auto y = mlp.forward(g, g.constant({2, 2}, std::vector<float>{0.1f, 0.7f, 0.4f, 0.2f}));
    g.backward(sum(square(y)));
    std::vector<float> out(y.value().begin(), y.value().end());
    for (auto* p : ps) out.insert(out.end(), p->tensor.grad().begin(), p->tensor.grad().end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("determinism: bias gradient is the in-order row sum at any buffer offset") {
  std::mt19937_64 rng(9);
  const std::size_t n = 2048, out = 64;
  std::vector<float> c(n * out);
  for (auto& v : c) v = std::uniform_real_distribution<float>(-1, 1)(rng);
  std::vector<float> expect(out, 0.0f);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < out; ++k) expect[k] += c[r * out + k];
  std::vector<std::vector<char>> shift;
  for (int pad = 0; pad < 8; ++pad) {
    shift.emplace_back(std::size_t(4 + 4 * pad));
    Parameter<float> b("b", Tensor<float>({out}), ParamGroup::network);
    Graph<float> g;
    auto y = affine(g.constant({n, 1}, std::vector<float>(n, 0.5f)),
                    g.constant({1, out}, std::vector<float>(out, 1.0f)), g.param(b));
    g.backward(sum(mul(y, g.constant({n, out}, c))));
    const auto got = b.tensor.grad();
    CHECK(std::equal(got.begin(), got.end(), expect.begin()));
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Parameter<float> p("p", Tensor<float>({3}, {1, -2, 3}), ParamGroup::network);
  p.tensor.ensure_grad();
  Parameter<float>* ps[] = {&p};
  adam_step<float>(ps, 0.1, 0.9, 0.99, 1e-8);
  CHECK(std::vector<float>(p.tensor.values().begin(), p.tensor.values().end()) == std::vector<float>{1, -2, 3});
  CHECK(p.adam.step == 1);
  CHECK(p.adam.first.size() == 3);
  CHECK(p.adam.second.size() == 3);
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  Parameter<double> p("p", Tensor<double>({1}, {0.0}), ParamGroup::network);
  p.tensor.ensure_grad();
  p.tensor.grad()[0] = 1.0;
  Parameter<double>* ps[] = {&p};
  adam_step<double>(ps, 0.1, 0.9, 0.99, 1e-8);
  CHECK(p.tensor[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.tensor.grad()[0] == 0.0);
}

TEST_CASE("adam: missing gradient names the parameter") {
  Parameter<float> p("lonely", Tensor<float>({1}, {0.0f}), ParamGroup::network);
  Parameter<float>* ps[] = {&p};
  try {
    adam_step<float>(ps, 0.1, 0.9, 0.99, 1e-8);
    FAIL("expected ContractViolation");
  } catch (const ContractViolation& e) {
    CHECK(std::string(e.what()).find("lonely") != std::string::npos);
  }
}

TEST_CASE("adam: scalar (w-3)^2 run tracks an independent reference") {
  // Reference trajectory from PyTorch's Adam (float64, betas 0.9/0.99, eps 1e-8).
  Parameter<double> p("w", Tensor<double>({1}, {0.0}), ParamGroup::network);
  Parameter<double>* ps[] = {&p};
  std::vector<double> mine;
  for (int step = 1; step <= 100; ++step) {
    p.tensor.zero_grad();
    Graph<double> g;
    g.backward(sum(square(add_scalar(g.param(p), -3.0))));
    adam_step<double>(ps, 0.1, 0.9, 0.99, 1e-8);
    mine.push_back(p.tensor[0]);
  }
  CHECK(mine[0] == doctest::Approx(0.09999999983333333).epsilon(1e-9));
  CHECK(mine[49] == doctest::Approx(3.191983766293337).epsilon(1e-9));
  CHECK(mine[99] == doctest::Approx(2.984504797622058).epsilon(1e-9));
  // Standard Adam overshoots at step 50 (|w-3| = 0.19); it settles by step 100.
  CHECK(std::abs(mine[99] - 3.0) < 0.05);
}

TEST_CASE("tensor: shape and grad invariants") {
  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), ContractViolation);
  Tensor<float> t({2, 3});
  CHECK(t.size() == shape_size(t.shape()));
  CHECK_FALSE(t.has_grad());
  t.ensure_grad();
  CHECK(t.grad().size() == t.size());
}

TEST_CASE("elementwise ops match direct evaluation") {
  Graph<double> g;
  auto a = g.constant({2, 2}, {0.2, 0.4, 0.6, 0.8});
  auto b = g.constant({2, 2}, {0.5, 0.25, 0.125, 2});
  auto check = [](Var<double> v, std::vector<double> ref) {
    auto val = v.value();
    REQUIRE(val.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(val[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  };
  check(add(a, b), {0.7, 0.65, 0.725, 2.8});
  check(sub(a, b), {-0.3, 0.15, 0.475, -1.2});
  check(mul(a, b), {0.1, 0.1, 0.075, 1.6});
  check(one_minus(a), {0.8, 0.6, 0.4, 0.2});
  check(logit(a), {std::log(0.25), std::log(0.4 / 0.6), std::log(1.5), std::log(4.0)});
  check(clamp(a, 0.3, 0.7), {0.3, 0.4, 0.6, 0.7});
  check(row_sum(a), {0.6, 1.4});
  check(mul_rows(a, g.constant({2, 1}, {2, -1})), {0.4, 0.8, -0.6, -0.8});
  check(mean(a), {0.5});
  const double sc[] = {2, 3}, of[] = {1, -1};
  check(col_affine(a, std::span<const double>(sc), std::span<const double>(of)), {1.4, 0.2, 2.2, 1.4});
  const Var<double> parts[] = {slice_cols(a, 1, 2), slice_cols(a, 0, 1)};
  check(concat_cols(std::span<const Var<double>>(parts)), {0.4, 0.2, 0.8, 0.6});
  check(slice_rows(a, 1, 2), {0.6, 0.8});
}
