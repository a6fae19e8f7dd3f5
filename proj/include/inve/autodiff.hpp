#pragma once

// Define-by-run reverse-mode differentiation over dense row-major arrays.
//
// A Graph is built per batch: every op appends one node holding its output
// values and a closure that pushes the output gradient to its parents.
// Parameters live outside graphs; a graph references them through leaf nodes
// that accumulate into the parameter's gradient once per backward pass.
//
// Every tensor is viewed as a matrix: rank >= 2 shapes use shape[0] rows,
// rank 0/1 shapes are a single row.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace inve::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);
std::size_t shape_rows(const Shape& shape);

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept { return shape_rows(shape_); }
  std::size_t cols() const noexcept { return rows() == 0 ? 0 : size() / rows(); }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const noexcept { return grad_.size() == values_.size() && !values_.empty(); }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }
  void ensure_grad();
  void zero_grad();
  void accumulate_grad(std::span<const T> g);

 private:
  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
};

// Learning-rate group of a parameter.
enum class ParamGroup : std::uint8_t { network = 0, hash_table = 1 };

template <class T>
struct AdamMoments {
  std::vector<T> first;
  std::vector<T> second;
  std::uint64_t step = 0;
};

template <class T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor<T> tensor, ParamGroup group);

  std::string name;
  Tensor<T> tensor;
  ParamGroup group = ParamGroup::network;
  AdamMoments<T> adam;
};

// Standard Adam with bias correction. Every parameter must carry a gradient;
// gradients are zeroed afterwards.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, double lr, double beta1, double beta2,
               double eps);

using NodeId = std::uint32_t;

template <class T>
class Graph;

// Handle to a node of one graph.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  NodeId id = 0;

  const Shape& shape() const;
  std::size_t rows() const { return shape_rows(shape()); }
  std::size_t cols() const;
  std::size_t size() const { return shape_size(shape()); }
  std::span<const T> value() const;
  // Scalar convenience for single-element nodes.
  T item() const;
};

template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, NodeId)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Leaf that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  Var<T> constant(Shape shape, std::vector<T> values);
  // Leaf whose gradient is kept for inspection after backward.
  Var<T> input(Tensor<T> value);
  // Leaf aliasing parameter storage, one node per parameter per graph. When the
  // graph has grad enabled, backward accumulates into the parameter's gradient
  // buffer; query paths use grad-disabled graphs and never write.
  Var<T> param(const Parameter<T>& p);

  // Appends an op node. The closure runs only when some parent requires a
  // gradient and grad mode is enabled.
  Var<T> record(Shape shape, std::vector<T> values, std::initializer_list<Var<T>> parents,
                BackwardFn backward);
  Var<T> record(Shape shape, std::vector<T> values, std::span<const Var<T>> parents,
                BackwardFn backward);

  const Shape& shape(NodeId id) const { return nodes_[id].shape; }
  std::span<const T> value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, zero-allocated on first access.
  std::span<T> grad_mut(NodeId id);
  // Empty when no gradient reached the node.
  std::span<const T> grad(NodeId id) const { return nodes_[id].grad; }
  std::span<const T> grad(Var<T> v) const { return grad(v.id); }

  // Accumulates d(root)/d(param) into every reachable parameter. Intermediate
  // gradients are reset at the start of each call.
  void backward(Var<T> root);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    const Parameter<T>* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, NodeId> param_nodes_;
  bool grad_enabled_;
};

enum class Activation { relu, tanh, sigmoid };

// Throws ConfigError on unknown names.
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

// ---- ops -------------------------------------------------------------------

// x[n,in] * w[in,out] + b[out]
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b);
template <class T>
Var<T> activation(Var<T> x, Activation kind);

template <class T>
Var<T> add(Var<T> a, Var<T> b);
template <class T>
Var<T> sub(Var<T> a, Var<T> b);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
// Scales row i of x[n,c] by s[n,1].
template <class T>
Var<T> mul_rows(Var<T> x, Var<T> s);
template <class T>
Var<T> scale(Var<T> x, T factor);
template <class T>
Var<T> add_scalar(Var<T> x, T offset);
// 1 - x
template <class T>
Var<T> one_minus(Var<T> x);
template <class T>
Var<T> square(Var<T> x);
// Natural log; input must be positive.
template <class T>
Var<T> log(Var<T> x);
// log(x / (1 - x)) for x in (0,1).
template <class T>
Var<T> logit(Var<T> x);
// Gradient passes only where lo <= x <= hi.
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi);

template <class T>
Var<T> sum(Var<T> x);
template <class T>
Var<T> mean(Var<T> x);
// Sum over columns: [n,c] -> [n,1].
template <class T>
Var<T> row_sum(Var<T> x);

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end);
template <class T>
Var<T> concat_cols(std::span<const Var<T>> parts);
template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t end);
// y[i,j] = x[i,j] * scales[j] + offsets[j]
template <class T>
Var<T> col_affine(Var<T> x, std::span<const T> scales, std::span<const T> offsets);

// Per axis d and octave k: sin(2^k pi x_d), cos(2^k pi x_d). [n,dims] -> [n, dims*2*frequencies].
template <class T>
Var<T> sinusoidal_encode(Var<T> x, int frequencies);

}  // namespace inve::ad
