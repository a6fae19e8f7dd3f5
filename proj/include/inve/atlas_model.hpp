#pragma once

// The six coordinate networks of a layered video atlas: foreground and
// background forward mappers (x,y,t) -> (u,v), their inverses (u,v,t) -> (x,y),
// an opacity network and one shared atlas colour network.
//
// Atlas layout: the foreground layer owns u in [0.5,1], the background layer
// u in [0,0.5); v spans [0,1] for both.

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "inve/autodiff.hpp"
#include "inve/checkpoint.hpp"
#include "inve/hash_grid.hpp"
#include "inve/network.hpp"

namespace inve {

enum class Layer : std::uint8_t { foreground = 0, background = 1 };

std::string_view layer_name(Layer layer);
// Accepts "fg"/"foreground" and "bg"/"background". Throws ConfigError otherwise.
Layer parse_layer(std::string_view name);

struct VideoDims {
  int width = 0;
  int height = 0;
  int frames = 0;

  bool operator==(const VideoDims&) const = default;
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(frames);
  }
};

struct PixelCoord {
  double x = 0;
  double y = 0;
  int t = 0;
};

struct AtlasCoord {
  double u = 0;
  double v = 0;
  Layer layer = Layer::foreground;
};

// A pixel position produced by an inverse map.
struct FramePoint {
  double x = 0;
  double y = 0;
  bool out_of_frame = false;
};

using Rgb = std::array<float, 3>;

inline double layer_u_offset(Layer layer) { return layer == Layer::foreground ? 0.5 : 0.0; }
bool in_layer_square(double u, double v, Layer layer);

// Scales (x, y, t) to [0,1] by (W-1, H-1, N-1); a degenerate axis maps to 0.
std::array<double, 3> normalize(const PixelCoord& p, const VideoDims& dims);
double normalized_time(int t, const VideoDims& dims);
// Throws ContractViolation unless 0 <= x < W, 0 <= y < H, 0 <= t < N.
void check_pixel(const PixelCoord& p, const VideoDims& dims);

// Fixed similarity prior of the mappers: frame-normalized coordinates map onto
// a centred patch of the layer square, equal atlas extent per pixel on both axes.
struct MappingPrior {
  double ax = 0.6;  // local-u extent of the frame width
  double ay = 0.3;  // v extent of the frame height

  static MappingPrior for_dims(const VideoDims& dims);
};

struct ModelConfig {
  HashGridConfig video_grid;  // n_max is replaced by the clip's largest extent
  HashGridConfig atlas_grid;
  int hidden_width = 64;
  int hidden_layers = 2;

  static ModelConfig paper();
  static ModelConfig desk();
  // "paper" or "desk"; throws ConfigError otherwise.
  static ModelConfig named(std::string_view profile);

  HashGridConfig video_grid_for(const VideoDims& dims) const;
  void validate() const;
};

// Read-only query surface shared by the trained model and test stubs.
class VideoMapping {
 public:
  virtual ~VideoMapping() = default;

  virtual VideoDims dims() const = 0;
  virtual bool forward_ready() const = 0;
  virtual bool inverse_ready() const = 0;
  // Each input pixel counts as one forward-map evaluation.
  virtual std::vector<AtlasCoord> forward_map(std::span<const PixelCoord> pixels,
                                              Layer layer) const = 0;
  virtual std::vector<double> opacity(std::span<const PixelCoord> pixels) const = 0;
  // Pixel positions clamped to [0,W-1]x[0,H-1] with the clamp recorded.
  virtual std::vector<FramePoint> inverse_map(std::span<const AtlasCoord> coords,
                                              std::span<const int> frames) const = 0;
  virtual std::uint64_t forward_evaluations() const = 0;
};

template <class T>
class ModelBundle final : public VideoMapping {
 public:
  ModelBundle(ModelConfig config, VideoDims dims, std::uint64_t seed);
  ModelBundle(const ModelBundle& other);
  ModelBundle& operator=(const ModelBundle& other);

  const ModelConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // ---- differentiable paths; coordinates are normalized ------------------
  // xyt[n,3] -> uv[n,2] inside the layer square.
  ad::Var<T> forward_uv(ad::Graph<T>& g, ad::Var<T> xyt, Layer layer) const;
  // xyt[n,3] -> alpha[n,1] in (0,1).
  ad::Var<T> opacity(ad::Graph<T>& g, ad::Var<T> xyt) const;
  // uv[n,2] -> rgb[n,3] in (0,1).
  ad::Var<T> atlas_rgb(ad::Graph<T>& g, ad::Var<T> uv) const;
  // uvt[n,3] (atlas u, v, normalized t) -> normalized xy[n,2], unclamped.
  ad::Var<T> inverse_xy(ad::Graph<T>& g, ad::Var<T> uvt, Layer layer) const;
  // alpha * A(M_f) + (1 - alpha) * A(M_b)
  ad::Var<T> reconstruct(ad::Graph<T>& g, ad::Var<T> xyt) const;

  // Forward mappers, opacity and atlas.
  std::vector<ad::Parameter<T>*> forward_parameters();
  std::vector<ad::Parameter<T>*> inverse_parameters();
  std::vector<ad::Parameter<T>*> parameters();
  std::vector<const ad::Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;

  void set_forward_trained(bool v) noexcept { forward_trained_ = v; }
  void set_inverse_trained(bool v) noexcept { inverse_trained_ = v; }
  // Test hook: replaces the opacity network output by a constant.
  void set_opacity_override(std::optional<T> alpha) noexcept { opacity_override_ = alpha; }

  // Copies parameter values (not optimizer state) from a model of the same shape.
  template <class U>
  void copy_parameters_from(const ModelBundle<U>& other);

  // ---- queries -----------------------------------------------------------
  VideoDims dims() const override { return dims_; }
  bool forward_ready() const override { return forward_trained_; }
  bool inverse_ready() const override { return inverse_trained_; }
  std::vector<AtlasCoord> forward_map(std::span<const PixelCoord> pixels,
                                      Layer layer) const override;
  std::vector<double> opacity(std::span<const PixelCoord> pixels) const override;
  std::vector<FramePoint> inverse_map(std::span<const AtlasCoord> coords,
                                      std::span<const int> frames) const override;
  std::uint64_t forward_evaluations() const override { return forward_evals_.load(); }
  void reset_forward_evaluations() const { forward_evals_.store(0); }

  std::vector<Rgb> atlas_color(std::span<const AtlasCoord> coords) const;
  std::vector<Rgb> reconstruct(std::span<const PixelCoord> pixels) const;

 private:
  ModelConfig config_;
  VideoDims dims_;
  std::uint64_t seed_ = 0;
  MappingPrior prior_;
  GridNetwork<T> forward_fg_, forward_bg_, inverse_fg_, inverse_bg_, opacity_net_, atlas_;
  bool forward_trained_ = false;
  bool inverse_trained_ = false;
  std::optional<T> opacity_override_;
  mutable std::atomic<std::uint64_t> forward_evals_{0};

  const GridNetwork<T>& mapper(Layer layer) const {
    return layer == Layer::foreground ? forward_fg_ : forward_bg_;
  }
  const GridNetwork<T>& inverse(Layer layer) const {
    return layer == Layer::foreground ? inverse_fg_ : inverse_bg_;
  }
};

using Model = ModelBundle<float>;

Checkpoint model_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

// FNV-1a over every parameter's name and value bytes.
std::uint64_t parameter_checksum(const Model& model);

struct ModelSnapshot {
  std::shared_ptr<const Model> model;
  std::uint64_t checksum = 0;
  std::uint64_t iteration = 0;

  bool intact() const { return model && parameter_checksum(*model) == checksum; }
};

// Latest published parameter snapshot. Publication swaps a pointer under a
// mutex, so readers see either the old or the new snapshot.
class SnapshotSlot {
 public:
  void publish(const Model& model, std::uint64_t iteration);
  // Null before the first publication. Throws ContractViolation if the
  // snapshot fails its checksum.
  std::shared_ptr<const ModelSnapshot> latest() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ModelSnapshot> current_;
};

}  // namespace inve
