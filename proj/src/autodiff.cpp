#include "inve/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "inve/errors.hpp"

namespace inve::ad {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

template <class T>
Graph<T>& graph_of(Var<T> a) {
  if (a.graph == nullptr) throw ContractViolation("op applied to an unbound variable");
  return *a.graph;
}

template <class T>
Graph<T>& same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractViolation("op operands belong to different graphs");
  return graph_of(a);
}

template <class T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.size() != b.size() || a.rows() != b.rows()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                            " vs " + shape_string(b.shape()));
  }
}

// Elementwise unary op with derivative computed from (input, output).
template <class T, class F, class D>
Var<T> unary(Var<T> x, F f, D dfdx) {
  Graph<T>& g = graph_of(x);
  const auto in = x.value();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const NodeId xi = x.id;
  return g.record(x.shape(), std::move(out), {x}, [xi, dfdx](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const auto gy = g.grad(self);
    const auto xv = g.value(xi);
    const auto yv = g.value(self);
    auto gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::size_t shape_rows(const Shape& shape) { return shape.size() >= 2 ? shape[0] : 1; }

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor / Parameter -------------------------------------------------------

template <class T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), T(0)) {}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw ContractViolation("tensor of shape " + shape_string(shape_) + " given " +
                            std::to_string(values_.size()) + " values");
  }
}

template <class T>
void Tensor<T>::ensure_grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <class T>
void Tensor<T>::accumulate_grad(std::span<const T> g) {
  if (g.size() != values_.size()) {
    throw ContractViolation("gradient size mismatch for shape " + shape_string(shape_));
  }
  ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
}

template <class T>
Parameter<T>::Parameter(std::string name_, Tensor<T> tensor_, ParamGroup group_)
    : name(std::move(name_)), tensor(std::move(tensor_)), group(group_) {}

template <class T>
void adam_step(std::span<Parameter<T>* const> params, double lr, double beta1, double beta2,
               double eps) {
  for (Parameter<T>* p : params) {
    if (!p->tensor.has_grad()) {
      throw ContractViolation("adam_step: parameter '" + p->name + "' carries no gradient");
    }
  }
  for (Parameter<T>* p : params) {
    auto& m = p->adam;
    const std::size_t n = p->tensor.size();
    if (m.first.size() != n) {
      m.first.assign(n, T(0));
      m.second.assign(n, T(0));
    }
    ++m.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(m.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(m.step));
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T step_size = static_cast<T>(lr / c1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T e = static_cast<T>(eps);
    auto w = p->tensor.values();
    auto g = p->tensor.grad();
    for (std::size_t i = 0; i < n; ++i) {
      m.first[i] = b1 * m.first[i] + (T(1) - b1) * g[i];
      m.second[i] = b2 * m.second[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step_size * m.first[i] / (std::sqrt(m.second[i]) * inv_sqrt_c2 + e);
    }
    p->tensor.zero_grad();
  }
}

// ---- Var / Graph ----------------------------------------------------------------

template <class T>
const Shape& Var<T>::shape() const {
  return graph_of(*this).shape(id);
}

template <class T>
std::size_t Var<T>::cols() const {
  const std::size_t r = rows();
  return r == 0 ? 0 : size() / r;
}

template <class T>
std::span<const T> Var<T>::value() const {
  return graph_of(*this).value(id);
}

template <class T>
T Var<T>::item() const {
  auto v = value();
  if (v.size() != 1) throw ContractViolation("item() on non-scalar " + shape_string(shape()));
  return v[0];
}

template <class T>
Var<T> Graph<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<NodeId>(nodes_.size() - 1)};
}

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.shape = value.shape();
  n.values.assign(value.values().begin(), value.values().end());
  return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::constant(Shape shape, std::vector<T> values) {
  return constant(Tensor<T>(std::move(shape), std::move(values)));
}

template <class T>
Var<T> Graph<T>::input(Tensor<T> value) {
  Node n;
  n.shape = value.shape();
  n.values.assign(value.values().begin(), value.values().end());
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

template <class T>
Var<T> Graph<T>::param(const Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>{this, it->second};
  Node n;
  n.shape = p.tensor.shape();
  n.param = &p;
  n.requires_grad = grad_enabled_;
  Var<T> v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

template <class T>
Var<T> Graph<T>::record(Shape shape, std::vector<T> values, std::initializer_list<Var<T>> parents,
                        BackwardFn backward) {
  return record(std::move(shape), std::move(values),
                std::span<const Var<T>>(parents.begin(), parents.size()), std::move(backward));
}

template <class T>
Var<T> Graph<T>::record(Shape shape, std::vector<T> values, std::span<const Var<T>> parents,
                        BackwardFn backward) {
  if (values.size() != shape_size(shape)) {
    throw ContractViolation("record: " + std::to_string(values.size()) +
                            " values for shape " + shape_string(shape));
  }
  Node n;
  n.shape = std::move(shape);
  n.values = std::move(values);
  if (grad_enabled_) {
    for (const Var<T>& p : parents) {
      if (p.graph != this) throw ContractViolation("record: parent from a different graph");
      if (nodes_[p.id].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

template <class T>
std::span<const T> Graph<T>::value(NodeId id) const {
  const Node& n = nodes_[id];
  if (n.param != nullptr) return n.param->tensor.values();
  return n.values;
}

template <class T>
std::span<T> Graph<T>::grad_mut(NodeId id) {
  Node& n = nodes_[id];
  const std::size_t size = shape_size(n.shape);
  if (n.grad.size() != size) n.grad.assign(size, T(0));
  return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> root) {
  if (root.graph != this) throw ContractViolation("backward: root from a different graph");
  if (shape_size(nodes_[root.id].shape) != 1) {
    throw ContractViolation("backward: root must be a scalar, got shape " +
                            shape_string(nodes_[root.id].shape));
  }
  for (Node& n : nodes_) n.grad.clear();
  grad_mut(root.id)[0] = T(1);
  for (std::int64_t id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.requires_grad || !n.backward) continue;
    n.backward(*this, static_cast<NodeId>(id));
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty())
      const_cast<Parameter<T>*>(n.param)->tensor.accumulate_grad(n.grad);
  }
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  throw ConfigError("unknown activation kind " + std::to_string(static_cast<int>(kind)));
}

// ---- ops -------------------------------------------------------------------------

template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  Graph<T>& g = same_graph(x, w);
  same_graph(x, b);
  const std::size_t n = x.rows(), in = x.cols();
  if (w.shape().size() != 2 || w.shape()[0] != in || b.size() != w.shape()[1]) {
    throw ContractViolation("affine: input " + shape_string(x.shape()) + " vs weights " +
                            shape_string(w.shape()) + " and bias " + shape_string(b.shape()));
  }
  const std::size_t out = w.shape()[1];
  std::vector<T> y(n * out);
  {
    ConstMap<T> X(x.value().data(), n, in);
    ConstMap<T> W(w.value().data(), in, out);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(b.value().data(), out);
    MutMap<T> Y(y.data(), n, out);
    Y.noalias() = X * W;
    Y.rowwise() += B;
  }
  const NodeId xi = x.id, wi = w.id, bi = b.id;
  return g.record({n, out}, std::move(y), {x, w, b},
                  [xi, wi, bi, n, in, out](Graph<T>& g, NodeId self) {
                    ConstMap<T> GY(g.grad(self).data(), n, out);
                    if (g.requires_grad(xi)) {
                      ConstMap<T> W(g.value(wi).data(), in, out);
                      MutMap<T> GX(g.grad_mut(xi).data(), n, in);
                      GX.noalias() += GY * W.transpose();
                    }
                    if (g.requires_grad(wi)) {
                      ConstMap<T> X(g.value(xi).data(), n, in);
                      MutMap<T> GW(g.grad_mut(wi).data(), in, out);
                      GW.noalias() += X.transpose() * GY;
                    }
                    if (g.requires_grad(bi)) {
                      // fixed row order; Eigen's colwise sum varies with alignment
                      std::vector<T> sum(out, T(0));
                      const T* gy = g.grad(self).data();
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < out; ++c) sum[c] += gy[r * out + c];
                      auto gb = g.grad_mut(bi);
                      for (std::size_t c = 0; c < out; ++c) gb[c] += sum[c];
                    }
                  });
}

template <class T>
Var<T> activation(Var<T> x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return unary(
          x, [](T v) { return v > T(0) ? v : T(0); },
          [](T v, T) { return v > T(0) ? T(1) : T(0); });
    case Activation::tanh:
      return unary(
          x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
    case Activation::sigmoid:
      return unary(
          x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
          [](T, T y) { return y * (T(1) - y); });
  }
  throw ConfigError("unknown activation kind " + std::to_string(static_cast<int>(kind)));
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape("add", a, b);
  const auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const NodeId ai = a.id, bi = b.id;
  return g.record(a.shape(), std::move(out), {a, b}, [ai, bi](Graph<T>& g, NodeId self) {
    const auto gy = g.grad(self);
    for (NodeId p : {ai, bi}) {
      if (!g.requires_grad(p)) continue;
      auto gp = g.grad_mut(p);
      for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape("sub", a, b);
  const auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const NodeId ai = a.id, bi = b.id;
  return g.record(a.shape(), std::move(out), {a, b}, [ai, bi](Graph<T>& g, NodeId self) {
    const auto gy = g.grad(self);
    if (g.requires_grad(ai)) {
      auto ga = g.grad_mut(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (g.requires_grad(bi)) {
      auto gb = g.grad_mut(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = same_graph(a, b);
  require_same_shape("mul", a, b);
  const auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const NodeId ai = a.id, bi = b.id;
  return g.record(a.shape(), std::move(out), {a, b}, [ai, bi](Graph<T>& g, NodeId self) {
    const auto gy = g.grad(self);
    if (g.requires_grad(ai)) {
      const auto bv = g.value(bi);
      auto ga = g.grad_mut(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(bi)) {
      const auto av = g.value(ai);
      auto gb = g.grad_mut(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

template <class T>
Var<T> mul_rows(Var<T> x, Var<T> s) {
  Graph<T>& g = same_graph(x, s);
  const std::size_t n = x.rows(), c = x.cols();
  if (s.size() != n) {
    throw ContractViolation("mul_rows: " + shape_string(x.shape()) + " scaled by " +
                            shape_string(s.shape()));
  }
  const auto xv = x.value(), sv = s.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * sv[i];
  const NodeId xi = x.id, si = s.id;
  return g.record(x.shape(), std::move(out), {x, s}, [xi, si, n, c](Graph<T>& g, NodeId self) {
    const auto gy = g.grad(self);
    if (g.requires_grad(xi)) {
      const auto sv = g.value(si);
      auto gx = g.grad_mut(xi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[i * c + j] * sv[i];
    }
    if (g.requires_grad(si)) {
      const auto xv = g.value(xi);
      auto gs = g.grad_mut(si);
      for (std::size_t i = 0; i < n; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < c; ++j) acc += gy[i * c + j] * xv[i * c + j];
        gs[i] += acc;
      }
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <class T>
Var<T> add_scalar(Var<T> x, T offset) {
  return unary(
      x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> one_minus(Var<T> x) {
  return unary(
      x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <class T>
Var<T> square(Var<T> x) {
  return unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> log(Var<T> x) {
  return unary(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> logit(Var<T> x) {
  return unary(
      x, [](T v) { return std::log(v / (T(1) - v)); },
      [](T v, T) { return T(1) / (v * (T(1) - v)); });
}

template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <class T>
Var<T> sum(Var<T> x) {
  Graph<T>& g = graph_of(x);
  T acc = 0;
  for (T v : x.value()) acc += v;
  const NodeId xi = x.id;
  return g.record({1}, {acc}, {x}, [xi](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const T gy = g.grad(self)[0];
    for (T& v : g.grad_mut(xi)) v += gy;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  Graph<T>& g = graph_of(x);
  const std::size_t n = x.size();
  if (n == 0) throw ContractViolation("mean of an empty tensor");
  T acc = 0;
  for (T v : x.value()) acc += v;
  const NodeId xi = x.id;
  return g.record({1}, {acc / static_cast<T>(n)}, {x}, [xi, n](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const T gy = g.grad(self)[0] / static_cast<T>(n);
    for (T& v : g.grad_mut(xi)) v += gy;
  });
}

template <class T>
Var<T> row_sum(Var<T> x) {
  Graph<T>& g = graph_of(x);
  const std::size_t n = x.rows(), c = x.cols();
  const auto xv = x.value();
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += xv[i * c + j];
  const NodeId xi = x.id;
  return g.record({n, 1}, std::move(out), {x}, [xi, n, c](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const auto gy = g.grad(self);
    auto gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[i];
  });
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  Graph<T>& g = graph_of(x);
  const std::size_t n = x.rows(), c = x.cols();
  if (begin >= end || end > c) {
    throw ContractViolation("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") of " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto xv = x.value();
  std::vector<T> out(n * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * c + begin + j];
  const NodeId xi = x.id;
  return g.record({n, w}, std::move(out), {x}, [xi, n, c, w, begin](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const auto gy = g.grad(self);
    auto gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += gy[i * w + j];
  });
}

template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols of nothing");
  Graph<T>& g = graph_of(parts[0]);
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    same_graph(parts[0], p);
    if (p.rows() != n) {
      throw ContractViolation("concat_cols: row mismatch " + shape_string(parts[0].shape()) +
                              " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(n * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + offset + j] = pv[i * widths[k] + j];
    offset += widths[k];
  }
  std::vector<NodeId> ids;
  for (const Var<T>& p : parts) ids.push_back(p.id);
  return g.record({n, total}, std::move(out), parts,
                  [ids, widths, n, total](Graph<T>& g, NodeId self) {
                    const auto gy = g.grad(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (g.requires_grad(ids[k])) {
                        auto gp = g.grad_mut(ids[k]);
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < widths[k]; ++j)
                            gp[i * widths[k] + j] += gy[i * total + offset + j];
                      }
                      offset += widths[k];
                    }
                  });
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end) {
  Graph<T>& g = graph_of(x);
  const std::size_t n = x.rows(), c = x.cols();
  if (begin >= end || end > n) {
    throw ContractViolation("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                            ") of " + shape_string(x.shape()));
  }
  const auto xv = x.value();
  std::vector<T> out(xv.begin() + begin * c, xv.begin() + end * c);
  const NodeId xi = x.id;
  return g.record({end - begin, c}, std::move(out), {x}, [xi, begin, c](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const auto gy = g.grad(self);
    auto gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[begin * c + i] += gy[i];
  });
}

template <class T>
Var<T> col_affine(Var<T> x, std::span<const T> scales, std::span<const T> offsets) {
  Graph<T>& g = graph_of(x);
  const std::size_t n = x.rows(), c = x.cols();
  if (scales.size() != c || offsets.size() != c) {
    throw ContractViolation("col_affine: " + std::to_string(scales.size()) + " scales and " +
                            std::to_string(offsets.size()) + " offsets for " +
                            shape_string(x.shape()));
  }
  const auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * scales[j] + offsets[j];
  const NodeId xi = x.id;
  std::vector<T> s(scales.begin(), scales.end());
  return g.record(x.shape(), std::move(out), {x}, [xi, n, c, s](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const auto gy = g.grad(self);
    auto gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[i * c + j] * s[j];
  });
}

template <class T>
Var<T> sinusoidal_encode(Var<T> x, int frequencies) {
  if (frequencies < 1) throw ContractViolation("sinusoidal_encode: frequencies must be >= 1");
  Graph<T>& g = graph_of(x);
  const std::size_t n = x.rows(), dims = x.cols();
  const std::size_t f = static_cast<std::size_t>(frequencies);
  const std::size_t width = dims * 2 * f;
  const auto xv = x.value();
  std::vector<T> out(n * width);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dims; ++d)
      for (std::size_t k = 0; k < f; ++k) {
        const T w = static_cast<T>(std::ldexp(std::numbers::pi, static_cast<int>(k)));
        const T arg = w * xv[i * dims + d];
        out[i * width + (d * f + k) * 2] = std::sin(arg);
        out[i * width + (d * f + k) * 2 + 1] = std::cos(arg);
      }
  const NodeId xi = x.id;
  return g.record({n, width}, std::move(out), {x}, [xi, n, dims, f, width](Graph<T>& g, NodeId self) {
    if (!g.requires_grad(xi)) return;
    const auto gy = g.grad(self);
    const auto y = g.value(self);
    auto gx = g.grad_mut(xi);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dims; ++d)
        for (std::size_t k = 0; k < f; ++k) {
          const T w = static_cast<T>(std::ldexp(std::numbers::pi, static_cast<int>(k)));
          const std::size_t o = i * width + (d * f + k) * 2;
          // d sin = w cos, d cos = -w sin
          gx[i * dims + d] += gy[o] * w * y[o + 1] - gy[o + 1] * w * y[o];
        }
  });
}

#define INVE_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                  \
  template struct Parameter<T>;                                                              \
  template struct Var<T>;                                                                    \
  template class Graph<T>;                                                                   \
  template void adam_step<T>(std::span<Parameter<T>* const>, double, double, double, double); \
  template Var<T> affine<T>(Var<T>, Var<T>, Var<T>);                                         \
  template Var<T> activation<T>(Var<T>, Activation);                                         \
  template Var<T> add<T>(Var<T>, Var<T>);                                                    \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                    \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                    \
  template Var<T> mul_rows<T>(Var<T>, Var<T>);                                               \
  template Var<T> scale<T>(Var<T>, T);                                                       \
  template Var<T> add_scalar<T>(Var<T>, T);                                                  \
  template Var<T> one_minus<T>(Var<T>);                                                      \
  template Var<T> square<T>(Var<T>);                                                         \
  template Var<T> log<T>(Var<T>);                                                            \
  template Var<T> logit<T>(Var<T>);                                                          \
  template Var<T> clamp<T>(Var<T>, T, T);                                                    \
  template Var<T> sum<T>(Var<T>);                                                            \
  template Var<T> mean<T>(Var<T>);                                                           \
  template Var<T> row_sum<T>(Var<T>);                                                        \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                           \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                                   \
  template Var<T> slice_rows<T>(Var<T>, std::size_t, std::size_t);                           \
  template Var<T> col_affine<T>(Var<T>, std::span<const T>, std::span<const T>);             \
  template Var<T> sinusoidal_encode<T>(Var<T>, int);

INVE_INSTANTIATE(float)
INVE_INSTANTIATE(double)

#undef INVE_INSTANTIATE

}  // namespace inve::ad
