#include "inve/editing.hpp"

#include <cmath>
#include <map>
#include <string>

#include "inve/errors.hpp"

namespace inve {

namespace {

bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

std::string where(const Point2& p) {
  return "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")";
}

Rgb blend(const Rgb& over, float a, const Rgb& under) {
  Rgb out;
  for (int k = 0; k < 3; ++k) out[k] = a * over[k] + (1.0f - a) * under[k];
  return out;
}

float weight_of(Layer l, double alpha) {
  return static_cast<float>(l == Layer::foreground ? alpha : 1.0 - alpha);
}

void check_chain(const SketchStroke& s) {
  const auto expected = collapse_duplicates(s.points).size();
  if (s.atlas_chain.size() != expected)
    throw ContractViolation("stroke atlas chain has " + std::to_string(s.atlas_chain.size()) +
                            " points, expected " + std::to_string(expected) +
                            " (map the stroke first)");
  for (const auto& p : s.atlas_chain)
    if (!finite(p) || !in_layer_square(p.x, p.y, s.layer))
      throw ContractViolation("atlas chain point " + where(p) + " is outside the " +
                              std::string(layer_name(s.layer)) + " square");
}

}  // namespace

namespace detail {

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0;
  if (len2 > 0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

}  // namespace detail

std::string_view space_name(CoordSpace s) { return s == CoordSpace::frame ? "frame" : "atlas"; }

CoordSpace parse_space(std::string_view name) {
  if (name == "frame") return CoordSpace::frame;
  if (name == "atlas") return CoordSpace::atlas;
  throw ConfigError("unknown coordinate space '" + std::string(name) + "' (expected frame or atlas)");
}

std::string_view kind_name(EditKind k) {
  switch (k) {
    case EditKind::metadata: return "metadata";
    case EditKind::texture: return "texture";
    case EditKind::sketch: return "sketch";
  }
  return "?";
}

EditKind parse_kind(std::string_view name) {
  if (name == "metadata") return EditKind::metadata;
  if (name == "texture") return EditKind::texture;
  if (name == "sketch") return EditKind::sketch;
  throw ConfigError("unknown edit kind '" + std::string(name) + "'");
}

std::string_view texture_mode_name(TextureMode m) {
  return m == TextureMode::atlas_warped ? "atlas_warped" : "point_tracked";
}

TextureMode parse_texture_mode(std::string_view name) {
  if (name == "atlas_warped") return TextureMode::atlas_warped;
  if (name == "point_tracked") return TextureMode::point_tracked;
  throw ConfigError("unknown texture mode '" + std::string(name) + "'");
}

void SketchStroke::validate() const {
  if (points.empty()) throw ContractViolation("stroke needs at least one control point");
  for (const auto& p : points)
    if (!finite(p)) throw ContractViolation("stroke control point is not finite");
  if (!(width > 0) || !std::isfinite(width))
    throw ContractViolation("stroke width must be positive, got " + std::to_string(width));
  for (float c : color)
    if (!(c >= 0.0f && c <= 1.0f)) throw ContractViolation("stroke colour outside [0,1]");
}

void AdjustDeltas::validate() const {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(brightness, -1, 1)) throw ContractViolation("brightness delta outside [-1,1]");
  if (!in(saturation, -1, 1)) throw ContractViolation("saturation delta outside [-1,1]");
  if (!in(hue, -180, 180)) throw ContractViolation("hue delta outside [-180,180] degrees");
}

void TextureEdit::validate() const {
  if (image.width <= 0 || image.height <= 0 ||
      image.data.size() != static_cast<std::size_t>(image.width) * image.height * 4)
    throw ContractViolation("texture image is empty or malformed");
  if (!(width > 0) || !(height > 0) || !std::isfinite(width) || !std::isfinite(height))
    throw ContractViolation("texture size must be positive");
  if (!finite(anchor) || !in_layer_square(anchor.x, anchor.y, layer))
    throw ContractViolation("texture anchor " + where(anchor) + " is outside the " +
                            std::string(layer_name(layer)) + " square");
}

Layer Edit::layer() const {
  return std::visit(
      [](const auto& p) -> Layer {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, MetadataStroke>)
          return p.region.layer;
        else
          return p.layer;
      },
      payload);
}

bool LayerVisibility::shows(EditKind k) const {
  switch (k) {
    case EditKind::metadata: return metadata;
    case EditKind::texture: return texture;
    case EditKind::sketch: return sketch;
  }
  return false;
}

std::uint64_t EditDocument::add(EditPayload payload) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SketchStroke>) {
          p.validate();
          check_chain(p);
        } else if constexpr (std::is_same_v<P, MetadataStroke>) {
          p.region.validate();
          check_chain(p.region);
          p.deltas.validate();
        } else {
          p.validate();
        }
      },
      payload);
  const std::uint64_t id = next_id_++;
  edits_.push_back(Edit{id, std::move(payload)});
  ++version_;
  return id;
}

bool EditDocument::remove(std::uint64_t id) {
  auto it = std::find_if(edits_.begin(), edits_.end(), [id](const Edit& e) { return e.id == id; });
  if (it == edits_.end()) return false;
  edits_.erase(it);
  ++version_;
  return true;
}

void EditDocument::set_visibility(const LayerVisibility& v) {
  visibility_ = v;
  ++version_;
}

const Edit* EditDocument::find(std::uint64_t id) const {
  for (const auto& e : edits_)
    if (e.id == id) return &e;
  return nullptr;
}

void EditDocument::restore(std::vector<Edit> edits, LayerVisibility visibility,
                           std::uint64_t version) {
  EditDocument fresh;
  for (auto& e : edits) {
    if (fresh.find(e.id)) throw LoadError("duplicate edit id " + std::to_string(e.id));
    fresh.next_id_ = e.id;
    fresh.add(std::move(e.payload));
  }
  fresh.visibility_ = visibility;
  fresh.version_ = version;
  std::uint64_t max_id = 0;
  for (const auto& e : fresh.edits_) max_id = std::max(max_id, e.id);
  fresh.next_id_ = max_id + 1;
  *this = std::move(fresh);
}

std::vector<Point2> collapse_duplicates(std::span<const Point2> points) {
  std::vector<Point2> out;
  for (const auto& p : points)
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  return out;
}

double atlas_units_per_pixel(const VideoDims& dims) {
  const int d = std::max(dims.width, dims.height);
  return d > 1 ? 0.3 / (d - 1) : 0.3;
}

std::vector<Point2> map_stroke_to_atlas(const SketchStroke& stroke, const VideoMapping& model) {
  if (stroke.space != CoordSpace::frame)
    throw ContractViolation("map_stroke_to_atlas needs a frame-space stroke");
  if (!model.forward_ready()) throw ContractViolation("forward maps are not trained");
  stroke.validate();
  const auto pts = collapse_duplicates(stroke.points);
  const VideoDims d = model.dims();
  std::vector<PixelCoord> px;
  px.reserve(pts.size());
  for (const auto& p : pts) {
    if (!(p.x >= 0 && p.x <= d.width - 1 && p.y >= 0 && p.y <= d.height - 1))
      throw ContractViolation("control point " + where(p) + " is outside the " +
                              std::to_string(d.width) + "x" + std::to_string(d.height) + " frame");
    PixelCoord c{p.x, p.y, stroke.frame};
    check_pixel(c, d);
    px.push_back(c);
  }
  const auto uv = model.forward_map(px, stroke.layer);
  std::vector<Point2> chain;
  chain.reserve(uv.size());
  for (const auto& a : uv) chain.push_back({a.u, a.v});
  return chain;
}

void prepare_stroke(SketchStroke& stroke, const VideoMapping* model) {
  stroke.validate();
  if (stroke.space == CoordSpace::frame) {
    if (!model) throw ContractViolation("a frame-space stroke needs a model to map it");
    stroke.atlas_chain = map_stroke_to_atlas(stroke, *model);
  } else {
    stroke.atlas_chain = collapse_duplicates(stroke.points);
  }
  check_chain(stroke);
}

std::uint64_t place_texture(TextureEdit edit, EditDocument& doc) {
  edit.validate();
  return doc.add(std::move(edit));
}

std::array<double, 3> rgb_to_hsv(const Rgb& c) {
  const double r = c[0], g = c[1], b = c[2];
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0;
  if (delta > 0) {
    if (mx == r)
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    else if (mx == g)
      h = 60.0 * ((b - r) / delta + 2.0);
    else
      h = 60.0 * ((r - g) / delta + 4.0);
  }
  if (h < 0) h += 360.0;
  const double s = mx > 0 ? delta / mx : 0.0;
  return {h, s, mx};
}

Rgb hsv_to_rgb(const std::array<double, 3>& hsv) {
  const double h = hsv[0], s = hsv[1], v = hsv[2];
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(std::floor(hp)) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

Rgb apply_metadata(const Rgb& color, const AdjustDeltas& d) {
  const double hue = std::fmod(d.hue, 360.0);
  if (d.brightness == 0 && d.saturation == 0 && hue == 0) return color;
  auto hsv = rgb_to_hsv(color);
  hsv[0] = std::fmod(hsv[0] + hue, 360.0);
  if (hsv[0] < 0) hsv[0] += 360.0;
  hsv[1] = std::clamp(hsv[1] + d.saturation, 0.0, 1.0);
  hsv[2] = std::clamp(hsv[2] + d.brightness, 0.0, 1.0);
  return hsv_to_rgb(hsv);
}

Point2 AtlasGrid::texel_center(int i, int j) const {
  return {layer_u_offset(layer) + (i + 0.5) / resolution, (j + 0.5) / resolution};
}

std::size_t AtlasGrid::texel_of(double u, double v) const {
  const int i = std::clamp(static_cast<int>(std::floor((u - layer_u_offset(layer)) * resolution)), 0,
                           width() - 1);
  const int j = std::clamp(static_cast<int>(std::floor(v * resolution)), 0, height() - 1);
  return static_cast<std::size_t>(j) * width() + i;
}

Rgba RgbaRaster::bilinear(double u, double v) const {
  const double fx = (u - layer_u_offset(grid.layer)) * grid.resolution - 0.5;
  const double fy = v * grid.resolution - 0.5;
  const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
  const double ax = fx - x0, ay = fy - y0;
  auto at = [&](int x, int y) -> const Rgba& {
    x = std::clamp(x, 0, grid.width() - 1);
    y = std::clamp(y, 0, grid.height() - 1);
    return texels[static_cast<std::size_t>(y) * grid.width() + x];
  };
  Rgba out;
  for (int k = 0; k < 4; ++k)
    out[k] = static_cast<float>((1 - ay) * ((1 - ax) * at(x0, y0)[k] + ax * at(x0 + 1, y0)[k]) +
                                ay * ((1 - ax) * at(x0, y0 + 1)[k] + ax * at(x0 + 1, y0 + 1)[k]));
  return out;
}

void rasterize_chain(std::span<const Point2> chain, const Rgb& color, double width,
                     RgbaRaster& target) {
  if (chain.empty()) throw ContractViolation("rasterize_chain: empty chain");
  const Rgba c{color[0], color[1], color[2], 1.0f};
  for_each_covered_texel(chain, width, target.grid, [&](std::size_t k) { target.texels[k] = c; });
}

void MetadataRaster::add(const MetadataStroke& stroke) {
  const auto s = static_cast<std::uint32_t>(strokes.size());
  strokes.push_back(stroke.deltas);
  std::map<std::uint32_t, std::uint32_t> next;  // old cover set -> old set + s
  for_each_covered_texel(stroke.region.atlas_chain, stroke.region.width, grid,
                         [&](std::size_t k) {
                           const std::uint32_t old = cover[k];
                           auto it = next.find(old);
                           if (it == next.end()) {
                             auto set = sets[old];
                             set.push_back(s);
                             sets.push_back(std::move(set));
                             it = next.emplace(old, static_cast<std::uint32_t>(sets.size() - 1)).first;
                           }
                           cover[k] = it->second;
                         });
}

void blit_texture(const TextureEdit& edit, RgbaRaster& target) {
  edit.validate();
  const AtlasGrid& g = target.grid;
  const double u0 = edit.anchor.x - edit.width / 2, v0 = edit.anchor.y - edit.height / 2;
  const double off = layer_u_offset(g.layer);
  const int i0 = std::max(0, static_cast<int>(std::floor((u0 - off) * g.resolution)));
  const int i1 = std::min(g.width() - 1, static_cast<int>(std::ceil((u0 + edit.width - off) * g.resolution)));
  const int j0 = std::max(0, static_cast<int>(std::floor(v0 * g.resolution)));
  const int j1 = std::min(g.height() - 1, static_cast<int>(std::ceil((v0 + edit.height) * g.resolution)));
  const auto& img = edit.image;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const Point2 c = g.texel_center(i, j);
      const double fx = (c.x - u0) / edit.width, fy = (c.y - v0) / edit.height;
      if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) continue;
      const int sx = std::min(img.width - 1, static_cast<int>(fx * img.width));
      const int sy = std::min(img.height - 1, static_cast<int>(fy * img.height));
      const std::uint8_t* px = &img.data[(static_cast<std::size_t>(sy) * img.width + sx) * 4];
      const float a = px[3] / 255.0f;
      if (a <= 0) continue;
      Rgba& d = target.texels[static_cast<std::size_t>(j) * g.width() + i];
      const float ao = a + d[3] * (1 - a);
      for (int k = 0; k < 3; ++k) d[k] = (px[k] / 255.0f * a + d[k] * d[3] * (1 - a)) / ao;
      d[3] = ao;
    }
}

EditCompositor::EditCompositor(const EditDocument& doc, int resolution) {
  const auto& vis = doc.visibility();
  for (const auto& e : doc.edits()) {
    if (!vis.shows(e.kind())) continue;
    const std::size_t l = index(e.layer());
    const AtlasGrid grid{e.layer(), resolution};
    std::visit(
        [&](const auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, SketchStroke>) {
            if (!sketch_[l]) sketch_[l].emplace(grid);
            rasterize_chain(p.atlas_chain, p.color, p.width, *sketch_[l]);
          } else if constexpr (std::is_same_v<P, MetadataStroke>) {
            if (!meta_[l]) meta_[l].emplace(grid);
            meta_[l]->add(p);
          } else if (p.mode == TextureMode::point_tracked) {
            tracked_.push_back(p);
          } else {
            if (!texture_[l]) texture_[l].emplace(grid);
            blit_texture(p, *texture_[l]);
          }
        },
        e.payload);
    empty_ = false;
  }
}

Rgb EditCompositor::composite_atlas(Rgb c, const AtlasCoord& uv_fg, const AtlasCoord& uv_bg,
                                    double alpha) const {
  if (empty_) return c;
  const Layer order[2] = {Layer::background, Layer::foreground};
  auto uv_of = [&](Layer l) -> const AtlasCoord& { return l == Layer::foreground ? uv_fg : uv_bg; };
  for (Layer l : order) {
    const auto* m = metadata_raster(l);
    if (!m) continue;
    const auto& set = m->at(uv_of(l).u, uv_of(l).v);
    if (set.empty()) continue;
    Rgb adj = c;
    for (auto s : set) adj = apply_metadata(adj, m->strokes[s]);
    c = blend(adj, weight_of(l, alpha), c);
  }
  for (const auto* rasters : {&texture_, &sketch_})
    for (Layer l : order) {
      const auto& r = (*rasters)[index(l)];
      if (!r) continue;
      const Rgba& t = r->nearest(uv_of(l).u, uv_of(l).v);
      const float a = t[3] * weight_of(l, alpha);
      if (a <= 0) continue;
      c = blend({t[0], t[1], t[2]}, a, c);
    }
  return c;
}

Rgb EditCompositor::composite_tracked(Rgb c, std::size_t k, double cx, double cy, double x,
                                      double y, double alpha) const {
  const TextureEdit& t = tracked_.at(k);
  const double fx = (x - (cx - t.width / 2)) / t.width, fy = (y - (cy - t.height / 2)) / t.height;
  if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) return c;
  const int sx = std::min(t.image.width - 1, static_cast<int>(fx * t.image.width));
  const int sy = std::min(t.image.height - 1, static_cast<int>(fy * t.image.height));
  const std::uint8_t* px = &t.image.data[(static_cast<std::size_t>(sy) * t.image.width + sx) * 4];
  float a = px[3] / 255.0f;
  if (t.alpha_multiply) a *= weight_of(t.layer, alpha);
  if (a <= 0) return c;
  return blend({px[0] / 255.0f, px[1] / 255.0f, px[2] / 255.0f}, a, c);
}

RgbaRaster raster_resample_stroke(std::span<const Point2> frame_points, int t, const Rgb& color,
                                  double width_px, Layer layer, const VideoMapping& model,
                                  Resample mode, int resolution) {
  if (frame_points.empty()) throw ContractViolation("raster_resample_stroke: empty stroke");
  if (!model.forward_ready()) throw ContractViolation("forward maps are not trained");
  const VideoDims d = model.dims();
  const int w = d.width, h = d.height;
  // Frame raster with hard coverage at pixel positions.
  std::vector<Rgba> frame(static_cast<std::size_t>(w) * h, Rgba{0, 0, 0, 0});
  const std::size_t segments = frame_points.size() == 1 ? 1 : frame_points.size() - 1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (std::size_t s = 0; s < segments; ++s) {
        const Point2 a = frame_points[s];
        const Point2 b = frame_points.size() == 1 ? a : frame_points[s + 1];
        if (detail::point_segment_distance({double(x), double(y)}, a, b) <= width_px / 2) {
          frame[static_cast<std::size_t>(y) * w + x] = {color[0], color[1], color[2], 1.0f};
          break;
        }
      }
  std::vector<PixelCoord> px;
  px.reserve(frame.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) px.push_back({double(x), double(y), t});
  const auto uv = model.forward_map(px, layer);

  RgbaRaster out(AtlasGrid{layer, resolution});
  const AtlasGrid& g = out.grid;
  if (mode == Resample::nearest) {
    for (std::size_t k = 0; k < uv.size(); ++k) out.texels[g.texel_of(uv[k].u, uv[k].v)] = frame[k];
    return out;
  }
  // Piecewise-linear interpolation over the mapped pixel mesh.
  const double off = layer_u_offset(layer);
  auto tri = [&](std::size_t ia, std::size_t ib, std::size_t ic) {
    const double ax = uv[ia].u, ay = uv[ia].v, bx = uv[ib].u, by = uv[ib].v, cx = uv[ic].u,
                 cy = uv[ic].v;
    const double den = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy);
    if (std::abs(den) < 1e-18) return;
    const int i0 = std::max(0, static_cast<int>(std::floor((std::min({ax, bx, cx}) - off) * g.resolution)));
    const int i1 = std::min(g.width() - 1, static_cast<int>(std::ceil((std::max({ax, bx, cx}) - off) * g.resolution)));
    const int j0 = std::max(0, static_cast<int>(std::floor(std::min({ay, by, cy}) * g.resolution)));
    const int j1 = std::min(g.height() - 1, static_cast<int>(std::ceil(std::max({ay, by, cy}) * g.resolution)));
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        const Point2 p = g.texel_center(i, j);
        const double l0 = ((by - cy) * (p.x - cx) + (cx - bx) * (p.y - cy)) / den;
        const double l1 = ((cy - ay) * (p.x - cx) + (ax - cx) * (p.y - cy)) / den;
        const double l2 = 1 - l0 - l1;
        if (l0 < -1e-12 || l1 < -1e-12 || l2 < -1e-12) continue;
        Rgba& dst = out.texels[static_cast<std::size_t>(j) * g.width() + i];
        for (int k = 0; k < 4; ++k)
          dst[k] = static_cast<float>(l0 * frame[ia][k] + l1 * frame[ib][k] + l2 * frame[ic][k]);
      }
  };
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const std::size_t p00 = static_cast<std::size_t>(y) * w + x, p10 = p00 + 1, p01 = p00 + w,
                        p11 = p01 + 1;
      tri(p00, p10, p11);
      tri(p00, p11, p01);
    }
  return out;
}

}  // namespace inve
