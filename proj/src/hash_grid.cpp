#include "inve/hash_grid.hpp"

#include <algorithm>
#include <cmath>

#include "inve/errors.hpp"

namespace inve {

namespace {

constexpr std::uint32_t kPrimes[3] = {1u, 2654435761u, 805459861u};

inline std::uint32_t vertex_index(const std::uint32_t* cell, int dims, std::uint32_t stride,
                                  bool dense, std::uint32_t table_mask) {
  if (dense) {
    std::uint32_t idx = 0, mul = 1;
    for (int d = 0; d < dims; ++d) {
      idx += cell[d] * mul;
      mul *= stride;
    }
    return idx;
  }
  std::uint32_t h = 0;
  for (int d = 0; d < dims; ++d) h ^= cell[d] * kPrimes[d];
  return h & table_mask;
}

}  // namespace

void HashGridConfig::validate() const {
  if (dims != 2 && dims != 3) throw ConfigError("hash grid dims must be 2 or 3");
  if (levels < 1) throw ConfigError("hash grid needs at least one level");
  if (features < 1) throw ConfigError("hash grid needs at least one feature per entry");
  if (table_size == 0 || (table_size & (table_size - 1)) != 0)
    throw ConfigError("hash table size must be a power of two, got " + std::to_string(table_size));
  if (n_min < 1 || n_min > n_max)
    throw ConfigError("hash grid resolutions must satisfy 1 <= n_min <= n_max");
}

int HashGridConfig::resolution(int level) const {
  if (level < 0 || level >= levels) {
    throw ContractViolation("hash grid level " + std::to_string(level) + " out of range [0," +
                            std::to_string(levels) + ")");
  }
  if (levels == 1) return n_min;
  const double b = std::exp((std::log(double(n_max)) - std::log(double(n_min))) / (levels - 1));
  // The epsilon keeps the finest level at n_max despite rounding in exp/log.
  return static_cast<int>(std::floor(n_min * std::pow(b, level) + 1e-6));
}

std::size_t HashGridConfig::table_rows(int level) const {
  const double verts = std::pow(double(resolution(level) + 1), dims);
  return verts <= double(table_size) ? static_cast<std::size_t>(verts) : table_size;
}

bool HashGridConfig::dense(int level) const {
  return std::pow(double(resolution(level) + 1), dims) <= double(table_size);
}

std::size_t HashGridConfig::parameter_count() const {
  std::size_t total = 0;
  for (int l = 0; l < levels; ++l) total += table_rows(l) * static_cast<std::size_t>(features);
  return total;
}

std::uint32_t hash_index(std::span<const std::uint32_t> cell, int level,
                         const HashGridConfig& config) {
  const int n = config.resolution(level);
  if (static_cast<int>(cell.size()) != config.dims) {
    throw ContractViolation("hash_index: cell has " + std::to_string(cell.size()) +
                            " coordinates for a " + std::to_string(config.dims) + "-D grid");
  }
  for (auto c : cell) {
    if (c > static_cast<std::uint32_t>(n)) {
      throw ContractViolation("hash_index: vertex coordinate " + std::to_string(c) +
                              " outside [0," + std::to_string(n) + "]");
    }
  }
  return vertex_index(cell.data(), config.dims, static_cast<std::uint32_t>(n + 1),
                      config.dense(level), config.table_size - 1);
}

template <class T>
HashGrid<T>::HashGrid(std::string name, HashGridConfig config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  std::uniform_real_distribution<double> init(-1e-4, 1e-4);
  for (int l = 0; l < config_.levels; ++l) {
    const std::size_t rows = config_.table_rows(l);
    std::vector<T> values(rows * static_cast<std::size_t>(config_.features));
    for (auto& v : values) v = static_cast<T>(init(rng));
    tables_.emplace_back(name + ".level" + std::to_string(l),
                         ad::Tensor<T>({rows, static_cast<std::size_t>(config_.features)},
                                       std::move(values)),
                         ad::ParamGroup::hash_table);
  }
}

template <class T>
ad::Var<T> HashGrid<T>::encode(ad::Graph<T>& graph, ad::Var<T> points) const {
  const int dims = config_.dims, levels = config_.levels, feats = config_.features;
  const std::size_t n = points.rows();
  if (static_cast<int>(points.cols()) != dims) {
    throw ContractViolation("hash grid encode: expected " + std::to_string(dims) +
                            " coordinates per point, got shape " +
                            ad::shape_string(points.shape()));
  }
  const int corners = 1 << dims;
  const std::size_t width = static_cast<std::size_t>(levels * feats);

  std::vector<ad::Var<T>> parents;
  parents.push_back(points);
  for (auto& t : tables_) parents.push_back(graph.param(t));

  struct LevelInfo {
    int res;
    std::uint32_t stride;
    bool dense;
  };
  std::vector<LevelInfo> info(levels);
  for (int l = 0; l < levels; ++l)
    info[l] = {config_.resolution(l), static_cast<std::uint32_t>(config_.resolution(l) + 1),
               config_.dense(l)};
  const std::uint32_t mask = config_.table_size - 1;

  const auto pv = points.value();
  std::vector<T> out(n * width, T(0));
  std::vector<std::uint32_t> indices(n * levels * corners);
  std::vector<T> fracs(n * levels * dims);
  std::vector<std::uint8_t> inside(n * dims);

  for (std::size_t i = 0; i < n; ++i) {
    T p[3];
    for (int d = 0; d < dims; ++d) {
      const T raw = pv[i * dims + d];
      inside[i * dims + d] = (raw >= T(0) && raw <= T(1)) ? 1 : 0;
      p[d] = std::clamp(raw, T(0), T(1));
    }
    for (int l = 0; l < levels; ++l) {
      const auto& lv = info[l];
      const auto table = graph.value(parents[1 + l].id);
      std::uint32_t base[3];
      T frac[3];
      for (int d = 0; d < dims; ++d) {
        const T x = p[d] * static_cast<T>(lv.res);
        const int c = std::min(static_cast<int>(std::floor(x)), lv.res - 1);
        base[d] = static_cast<std::uint32_t>(c);
        frac[d] = x - static_cast<T>(c);
        fracs[(i * levels + l) * dims + d] = frac[d];
      }
      T* o = &out[i * width + static_cast<std::size_t>(l * feats)];
      for (int k = 0; k < corners; ++k) {
        std::uint32_t cell[3];
        T w = 1;
        for (int d = 0; d < dims; ++d) {
          const bool hi = (k >> d) & 1;
          cell[d] = base[d] + (hi ? 1u : 0u);
          w *= hi ? frac[d] : T(1) - frac[d];
        }
        const std::uint32_t idx = vertex_index(cell, dims, lv.stride, lv.dense, mask);
        indices[(i * levels + l) * corners + k] = idx;
        const T* row = &table[static_cast<std::size_t>(idx) * feats];
        for (int f = 0; f < feats; ++f) o[f] += w * row[f];
      }
    }
  }

  std::vector<ad::NodeId> table_ids;
  for (int l = 0; l < levels; ++l) table_ids.push_back(parents[1 + l].id);
  std::vector<T> resolutions(levels);
  for (int l = 0; l < levels; ++l) resolutions[l] = static_cast<T>(info[l].res);
  const ad::NodeId point_id = points.id;

  return graph.record(
      {n, width}, std::move(out), std::span<const ad::Var<T>>(parents),
      [=, indices = std::move(indices), fracs = std::move(fracs), inside = std::move(inside)](
          ad::Graph<T>& g, ad::NodeId self) {
        const auto gy = g.grad(self);
        for (int l = 0; l < levels; ++l) {
          if (!g.requires_grad(table_ids[l])) continue;
          auto gt = g.grad_mut(table_ids[l]);
          for (std::size_t i = 0; i < n; ++i) {
            const T* fr = &fracs[(i * levels + l) * dims];
            const T* go = &gy[i * width + static_cast<std::size_t>(l * feats)];
            for (int k = 0; k < corners; ++k) {
              T w = 1;
              for (int d = 0; d < dims; ++d) w *= ((k >> d) & 1) ? fr[d] : T(1) - fr[d];
              T* row = &gt[static_cast<std::size_t>(indices[(i * levels + l) * corners + k]) * feats];
              for (int f = 0; f < feats; ++f) row[f] += w * go[f];
            }
          }
        }
        if (!g.requires_grad(point_id)) return;
        auto gp = g.grad_mut(point_id);
        for (std::size_t i = 0; i < n; ++i) {
          for (int l = 0; l < levels; ++l) {
            const auto table = g.value(table_ids[l]);
            const T* fr = &fracs[(i * levels + l) * dims];
            const T* go = &gy[i * width + static_cast<std::size_t>(l * feats)];
            for (int k = 0; k < corners; ++k) {
              const T* row =
                  &table[static_cast<std::size_t>(indices[(i * levels + l) * corners + k]) * feats];
              T dot = 0;
              for (int f = 0; f < feats; ++f) dot += row[f] * go[f];
              for (int a = 0; a < dims; ++a) {
                if (!inside[i * dims + a]) continue;
                T dw = ((k >> a) & 1) ? T(1) : T(-1);
                for (int d = 0; d < dims; ++d) {
                  if (d == a) continue;
                  dw *= ((k >> d) & 1) ? fr[d] : T(1) - fr[d];
                }
                gp[i * dims + a] += dot * dw * resolutions[l];
              }
            }
          }
        }
      });
}

template class HashGrid<float>;
template class HashGrid<double>;

}  // namespace inve
