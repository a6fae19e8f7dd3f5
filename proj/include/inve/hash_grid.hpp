#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "inve/autodiff.hpp"

namespace inve {

struct HashGridConfig {
  int dims = 3;
  int levels = 8;
  std::uint32_t table_size = 1u << 14;  // entries per level, power of two
  int features = 2;
  int n_min = 16;
  int n_max = 512;

  // Throws ConfigError when an invariant is broken.
  void validate() const;
  // Grid resolution N_l of a level (cells per axis).
  int resolution(int level) const;
  // min(T, (N_l + 1)^dims)
  std::size_t table_rows(int level) const;
  bool dense(int level) const;
  int output_dim() const { return levels * features; }
  std::size_t parameter_count() const;
};

// Table row of a grid vertex. Dense row-major addressing while the level fits
// in the table, spatial XOR hash otherwise. Throws ContractViolation when the
// level or a coordinate is out of range.
std::uint32_t hash_index(std::span<const std::uint32_t> cell, int level, const HashGridConfig& config);

template <class T>
class HashGrid {
 public:
  HashGrid() = default;
  HashGrid(std::string name, HashGridConfig config, std::mt19937_64& rng);

  const HashGridConfig& config() const noexcept { return config_; }
  std::vector<ad::Parameter<T>>& tables() noexcept { return tables_; }
  const std::vector<ad::Parameter<T>>& tables() const noexcept { return tables_; }

  // points[n, dims] in [0,1] (clamped) -> features[n, levels*features].
  // Gradients flow to the touched table rows and to the points.
  ad::Var<T> encode(ad::Graph<T>& graph, ad::Var<T> points) const;

 private:
  HashGridConfig config_;
  std::vector<ad::Parameter<T>> tables_;
};

}  // namespace inve
