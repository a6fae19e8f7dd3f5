#pragma once

#include <random>
#include <string>
#include <vector>

#include "inve/autodiff.hpp"
#include "inve/hash_grid.hpp"

namespace inve {

struct MlpConfig {
  int input = 0;
  int hidden_width = 64;
  int hidden_layers = 2;
  int output = 0;

  std::size_t parameter_count() const;
};

// Fully connected stack: ReLU between layers, linear output.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, MlpConfig config, std::mt19937_64& rng);

  const MlpConfig& config() const noexcept { return config_; }
  ad::Var<T> forward(ad::Graph<T>& graph, ad::Var<T> x) const;
  void collect(std::vector<ad::Parameter<T>*>& out);
  void collect(std::vector<const ad::Parameter<T>*>& out) const;

 private:
  MlpConfig config_;
  std::vector<ad::Parameter<T>> params_;  // weight, bias, weight, bias, ...
};

// Hash-grid encoding followed by an MLP head.
template <class T>
class GridNetwork {
 public:
  GridNetwork() = default;
  GridNetwork(std::string name, HashGridConfig grid, int hidden_width, int hidden_layers,
              int output, std::mt19937_64& rng);

  ad::Var<T> forward(ad::Graph<T>& graph, ad::Var<T> x) const {
    return mlp_.forward(graph, grid_.encode(graph, x));
  }
  HashGrid<T>& grid() noexcept { return grid_; }
  const HashGrid<T>& grid() const noexcept { return grid_; }
  Mlp<T>& mlp() noexcept { return mlp_; }
  void collect(std::vector<ad::Parameter<T>*>& out);
  void collect(std::vector<const ad::Parameter<T>*>& out) const;

 private:
  HashGrid<T> grid_;
  Mlp<T> mlp_;
};

// Sinusoidal positional encoding followed by an MLP head; the slow-converging
// baseline coordinate network.
template <class T>
class SinusoidalNetwork {
 public:
  SinusoidalNetwork() = default;
  SinusoidalNetwork(std::string name, int dims, int frequencies, int hidden_width,
                    int hidden_layers, int output, std::mt19937_64& rng);

  ad::Var<T> forward(ad::Graph<T>& graph, ad::Var<T> x) const {
    return mlp_.forward(graph, ad::sinusoidal_encode(x, frequencies_));
  }
  void collect(std::vector<ad::Parameter<T>*>& out) { mlp_.collect(out); }

 private:
  int frequencies_ = 1;
  Mlp<T> mlp_;
};

template <class T>
std::size_t parameter_count(const std::vector<ad::Parameter<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->tensor.size();
  return n;
}

}  // namespace inve
