#pragma once

// Layered edit document: local adjustments (bottom), textures, sketches (top).
// Strokes are polygonal chains; a frame-space stroke is mapped to the atlas by
// forward-mapping its control points only, then rasterized with hard coverage
// into an atlas raster that serves as a render cache.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "inve/atlas_model.hpp"
#include "inve/media_io.hpp"

namespace inve {

// Texels per atlas unit. A layer's 0.5 x 1 sub-square is R/2 x R texels.
inline constexpr int kAtlasRasterResolution = 1024;

struct Point2 {
  double x = 0;
  double y = 0;
  bool operator==(const Point2&) const = default;
};

enum class CoordSpace : std::uint8_t { frame, atlas };
std::string_view space_name(CoordSpace s);
CoordSpace parse_space(std::string_view name);

// Composition order, bottom to top.
enum class EditKind : std::uint8_t { metadata = 0, texture = 1, sketch = 2 };
std::string_view kind_name(EditKind k);
EditKind parse_kind(std::string_view name);

struct SketchStroke {
  CoordSpace space = CoordSpace::frame;
  std::vector<Point2> points;  // frame (x, y) or atlas (u, v)
  int frame = 0;               // source frame of frame-space points
  Rgb color{1.0f, 1.0f, 1.0f};
  double width = 0.01;  // atlas units
  Layer layer = Layer::background;
  std::vector<Point2> atlas_chain;  // one atlas point per (collapsed) control point

  // Throws ContractViolation on an empty chain, non-finite coordinates, a
  // non-positive width or a colour outside [0,1].
  void validate() const;
};

struct AdjustDeltas {
  double brightness = 0;  // [-1, 1]
  double saturation = 0;  // [-1, 1]
  double hue = 0;         // degrees, [-180, 180]

  void validate() const;
  bool operator==(const AdjustDeltas&) const = default;
};

struct MetadataStroke {
  SketchStroke region;  // geometry only; the colour is unused
  AdjustDeltas deltas;
};

enum class TextureMode : std::uint8_t { atlas_warped, point_tracked };
std::string_view texture_mode_name(TextureMode m);
TextureMode parse_texture_mode(std::string_view name);

struct TextureEdit {
  TextureMode mode = TextureMode::atlas_warped;
  RgbaImage image;
  Point2 anchor;  // atlas (u, v) of the texture centre
  double width = 0.05;   // atlas units (warped) or pixels (tracked)
  double height = 0.05;
  Layer layer = Layer::background;
  bool alpha_multiply = false;  // tracked mode: scale by the layer's opacity

  void validate() const;
};

using EditPayload = std::variant<MetadataStroke, TextureEdit, SketchStroke>;

struct Edit {
  std::uint64_t id = 0;
  EditPayload payload;

  EditKind kind() const { return static_cast<EditKind>(payload.index()); }
  Layer layer() const;
};

struct LayerVisibility {
  bool metadata = true;
  bool texture = true;
  bool sketch = true;

  bool shows(EditKind k) const;
  bool operator==(const LayerVisibility&) const = default;
};

// Edits in insertion order with ids from an in-memory counter. Every
// mutation bumps version() by one.
class EditDocument {
 public:
  // Strokes must already carry their atlas chain. Throws ContractViolation on
  // an invalid payload.
  std::uint64_t add(EditPayload payload);
  // False when the id is unknown.
  bool remove(std::uint64_t id);
  void set_visibility(const LayerVisibility& v);

  const Edit* find(std::uint64_t id) const;
  const std::vector<Edit>& edits() const noexcept { return edits_; }
  bool empty() const noexcept { return edits_.empty(); }
  std::uint64_t version() const noexcept { return version_; }
  const LayerVisibility& visibility() const noexcept { return visibility_; }
  std::uint64_t next_id() const noexcept { return next_id_; }

  // Used when loading a persisted document.
  void restore(std::vector<Edit> edits, LayerVisibility visibility, std::uint64_t version);

 private:
  std::vector<Edit> edits_;
  LayerVisibility visibility_;
  std::uint64_t version_ = 0;
  std::uint64_t next_id_ = 1;
};

std::vector<Point2> collapse_duplicates(std::span<const Point2> points);

// Atlas extent of one pixel under the mapping prior, for converting pixel
// widths to atlas units.
double atlas_units_per_pixel(const VideoDims& dims);

// Maps every control point with one forward-map call (K evaluations for K
// collapsed points). Throws ContractViolation when a point lies outside the
// frame, the frame index is out of range or the forward maps are untrained.
std::vector<Point2> map_stroke_to_atlas(const SketchStroke& stroke, const VideoMapping& model);
// Fills atlas_chain: mapped for frame-space strokes, the collapsed points for
// atlas-space strokes (which must lie in the layer square). model may be null
// for atlas-space strokes.
void prepare_stroke(SketchStroke& stroke, const VideoMapping* model);

// Validates the anchor (inside the layer square for warped textures) and adds
// the edit.
std::uint64_t place_texture(TextureEdit edit, EditDocument& doc);

// HSV adjustment: V += brightness, S += saturation (both clamped to [0,1]),
// H rotated by hue degrees.
Rgb apply_metadata(const Rgb& color, const AdjustDeltas& deltas);
std::array<double, 3> rgb_to_hsv(const Rgb& c);
Rgb hsv_to_rgb(const std::array<double, 3>& hsv);

// Texel grid of one layer's atlas sub-square.
struct AtlasGrid {
  Layer layer = Layer::background;
  int resolution = kAtlasRasterResolution;

  int width() const { return resolution / 2; }
  int height() const { return resolution; }
  std::size_t size() const { return static_cast<std::size_t>(width()) * height(); }
  Point2 texel_center(int i, int j) const;
  // Nearest texel of an atlas point, clamped into the grid.
  std::size_t texel_of(double u, double v) const;
};

using Rgba = std::array<float, 4>;  // straight alpha

struct RgbaRaster {
  AtlasGrid grid;
  std::vector<Rgba> texels;

  explicit RgbaRaster(AtlasGrid g) : grid(g), texels(g.size(), Rgba{0, 0, 0, 0}) {}
  const Rgba& nearest(double u, double v) const { return texels[grid.texel_of(u, v)]; }
  // Bilinear between texel centres, edge-clamped.
  Rgba bilinear(double u, double v) const;
};

// Calls fn(texel index) once per texel whose centre lies within width/2 of
// some segment of the chain (a disc for a single point).
template <class Fn>
void for_each_covered_texel(std::span<const Point2> chain, double width, const AtlasGrid& grid,
                            Fn&& fn);

// Hard coverage: every covered texel becomes exactly (color, 1).
void rasterize_chain(std::span<const Point2> chain, const Rgb& color, double width,
                     RgbaRaster& target);

// Cover sets of metadata strokes: each texel holds an index into a table of
// stroke lists (insertion order); 0 is the empty set.
struct MetadataRaster {
  AtlasGrid grid;
  std::vector<std::uint32_t> cover;
  std::vector<std::vector<std::uint32_t>> sets{{}};
  std::vector<AdjustDeltas> strokes;

  explicit MetadataRaster(AtlasGrid g) : grid(g), cover(g.size(), 0) {}
  void add(const MetadataStroke& stroke);
  const std::vector<std::uint32_t>& at(double u, double v) const {
    return sets[cover[grid.texel_of(u, v)]];
  }
};

// Alpha-over of a warped texture into the raster, nearest-sampled.
void blit_texture(const TextureEdit& edit, RgbaRaster& target);

// Per-layer atlas rasters regenerated from a document (visible kinds only).
class EditCompositor {
 public:
  explicit EditCompositor(const EditDocument& doc, int resolution = kAtlasRasterResolution);

  bool empty() const noexcept { return empty_; }
  bool needs_inverse() const noexcept { return !tracked_.empty(); }
  const std::vector<TextureEdit>& tracked_textures() const noexcept { return tracked_; }

  // Metadata, texture and sketch layers in that order, each layer weighted by
  // 1 - alpha (background) or alpha (foreground). Point-tracked textures are
  // not included.
  Rgb composite_atlas(Rgb color, const AtlasCoord& uv_fg, const AtlasCoord& uv_bg,
                      double alpha) const;
  // Point-tracked texture k drawn centred at (cx, cy), sampled at pixel (x, y).
  Rgb composite_tracked(Rgb color, std::size_t k, double cx, double cy, double x, double y,
                        double alpha) const;

  const RgbaRaster* sketch_raster(Layer l) const { return sketch_[index(l)] ? &*sketch_[index(l)] : nullptr; }
  const RgbaRaster* texture_raster(Layer l) const { return texture_[index(l)] ? &*texture_[index(l)] : nullptr; }
  const MetadataRaster* metadata_raster(Layer l) const { return meta_[index(l)] ? &*meta_[index(l)] : nullptr; }

 private:
  static std::size_t index(Layer l) { return static_cast<std::size_t>(l); }
  std::array<std::optional<RgbaRaster>, 2> sketch_, texture_;
  std::array<std::optional<MetadataRaster>, 2> meta_;
  std::vector<TextureEdit> tracked_;
  bool empty_ = true;
};

// Forward-maps every pixel of frame t (W*H evaluations), draws the stroke
// into a frame raster with hard coverage (width in pixels) and resamples it
// onto the atlas grid. Linear resampling interpolates over the pixel mesh;
// nearest splats each pixel to its closest texel. Test-only comparator for the
// vectorized path.
enum class Resample { linear, nearest };
RgbaRaster raster_resample_stroke(std::span<const Point2> frame_points, int t, const Rgb& color,
                                  double width_px, Layer layer, const VideoMapping& model,
                                  Resample mode, int resolution = kAtlasRasterResolution);

// ---- template implementation ------------------------------------------------

namespace detail {
double point_segment_distance(Point2 p, Point2 a, Point2 b);
}

template <class Fn>
void for_each_covered_texel(std::span<const Point2> chain, double width, const AtlasGrid& grid,
                            Fn&& fn) {
  if (chain.empty()) return;
  const double r = width / 2;
  const double off = layer_u_offset(grid.layer);
  const double res = grid.resolution;
  std::vector<std::uint8_t> seen(grid.size(), 0);
  const std::size_t segments = chain.size() == 1 ? 1 : chain.size() - 1;
  for (std::size_t s = 0; s < segments; ++s) {
    const Point2 a = chain[s];
    const Point2 b = chain.size() == 1 ? chain[0] : chain[s + 1];
    const double u0 = std::min(a.x, b.x) - r, u1 = std::max(a.x, b.x) + r;
    const double v0 = std::min(a.y, b.y) - r, v1 = std::max(a.y, b.y) + r;
    // texel (i, j) has centre (off + (i + 0.5) / res, (j + 0.5) / res)
    const int i0 = std::max(0, static_cast<int>(std::floor((u0 - off) * res - 0.5)));
    const int i1 = std::min(grid.width() - 1, static_cast<int>(std::ceil((u1 - off) * res - 0.5)));
    const int j0 = std::max(0, static_cast<int>(std::floor(v0 * res - 0.5)));
    const int j1 = std::min(grid.height() - 1, static_cast<int>(std::ceil(v1 * res - 0.5)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * grid.width() + i;
        if (seen[k]) continue;
        if (detail::point_segment_distance(grid.texel_center(i, j), a, b) <= r) {
          seen[k] = 1;
          fn(k);
        }
      }
  }
}

}  // namespace inve
