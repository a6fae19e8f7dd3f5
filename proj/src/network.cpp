#include "inve/network.hpp"

#include <cmath>

#include "inve/errors.hpp"

namespace inve {

std::size_t MlpConfig::parameter_count() const {
  std::size_t total = 0;
  int fan_in = input;
  for (int l = 0; l < hidden_layers; ++l) {
    total += static_cast<std::size_t>(fan_in + 1) * hidden_width;
    fan_in = hidden_width;
  }
  return total + static_cast<std::size_t>(fan_in + 1) * output;
}

template <class T>
Mlp<T>::Mlp(std::string name, MlpConfig config, std::mt19937_64& rng) : config_(config) {
  if (config.input < 1 || config.output < 1 || config.hidden_layers < 0 ||
      (config.hidden_layers > 0 && config.hidden_width < 1)) {
    throw ConfigError("invalid MLP shape for '" + name + "'");
  }
  int fan_in = config.input;
  for (int l = 0; l <= config.hidden_layers; ++l) {
    const int fan_out = l == config.hidden_layers ? config.output : config.hidden_width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> init(-bound, bound);
    std::vector<T> w(static_cast<std::size_t>(fan_in) * fan_out), b(fan_out);
    for (auto& v : w) v = static_cast<T>(init(rng));
    for (auto& v : b) v = static_cast<T>(init(rng));
    const std::string prefix = name + ".layer" + std::to_string(l);
    params_.emplace_back(prefix + ".weight",
                         ad::Tensor<T>({std::size_t(fan_in), std::size_t(fan_out)}, std::move(w)),
                         ad::ParamGroup::network);
    params_.emplace_back(prefix + ".bias", ad::Tensor<T>({std::size_t(fan_out)}, std::move(b)),
                         ad::ParamGroup::network);
    fan_in = fan_out;
  }
}

template <class T>
ad::Var<T> Mlp<T>::forward(ad::Graph<T>& graph, ad::Var<T> x) const {
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::affine(x, graph.param(params_[2 * l]), graph.param(params_[2 * l + 1]));
    if (l + 1 < layers) x = ad::activation(x, ad::Activation::relu);
  }
  return x;
}

template <class T>
void Mlp<T>::collect(std::vector<ad::Parameter<T>*>& out) {
  for (auto& p : params_) out.push_back(&p);
}

template <class T>
void Mlp<T>::collect(std::vector<const ad::Parameter<T>*>& out) const {
  for (const auto& p : params_) out.push_back(&p);
}

template <class T>
GridNetwork<T>::GridNetwork(std::string name, HashGridConfig grid, int hidden_width,
                            int hidden_layers, int output, std::mt19937_64& rng)
    : grid_(name + ".grid", grid, rng),
      mlp_(name + ".mlp", MlpConfig{grid.output_dim(), hidden_width, hidden_layers, output}, rng) {}

template <class T>
void GridNetwork<T>::collect(std::vector<ad::Parameter<T>*>& out) {
  for (auto& t : grid_.tables()) out.push_back(&t);
  mlp_.collect(out);
}

template <class T>
void GridNetwork<T>::collect(std::vector<const ad::Parameter<T>*>& out) const {
  for (const auto& t : grid_.tables()) out.push_back(&t);
  mlp_.collect(out);
}

template <class T>
SinusoidalNetwork<T>::SinusoidalNetwork(std::string name, int dims, int frequencies,
                                        int hidden_width, int hidden_layers, int output,
                                        std::mt19937_64& rng)
    : frequencies_(frequencies),
      mlp_(std::move(name), MlpConfig{dims * 2 * frequencies, hidden_width, hidden_layers, output},
           rng) {}

template class Mlp<float>;
template class Mlp<double>;
template class GridNetwork<float>;
template class GridNetwork<double>;
template class SinusoidalNetwork<float>;
template class SinusoidalNetwork<double>;

}  // namespace inve
