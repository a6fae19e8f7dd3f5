#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "inve/editing.hpp"
#include "inve/edit_store.hpp"
#include "inve/hash_grid.hpp"

namespace inve::test {

// Direct evaluation of the vertex addressing rule.
inline std::uint32_t oracle_index(const std::vector<std::uint32_t>& c, int n, std::uint32_t table_size) {
  const double verts = std::pow(n + 1.0, double(c.size()));
  if (verts <= table_size) {
    std::uint64_t idx = 0, mul = 1;
    for (auto v : c) {
      idx += v * mul;
      mul *= std::uint64_t(n + 1);
    }
    return std::uint32_t(idx);
  }
  const std::uint32_t primes[3] = {1u, 2654435761u, 805459861u};
  std::uint32_t h = 0;
  for (std::size_t d = 0; d < c.size(); ++d) h ^= std::uint32_t(c[d] * primes[d]);
  return h % table_size;
}

template <class T>
void randomize(HashGrid<T>& grid, std::mt19937_64& rng, T scale = 1) {
  std::uniform_real_distribution<T> d(-scale, scale);
  for (auto& t : grid.tables())
    for (auto& v : t.tensor.values()) v = d(rng);
}

// Brute-force d-linear interpolation: loops over every corner of the
// enclosing cell and multiplies per-axis hat weights.
template <class T>
inline std::vector<double> oracle_encode(const HashGrid<T>& grid, std::span<const double> p) {
  const auto& cfg = grid.config();
  std::vector<double> out;
  for (int l = 0; l < cfg.levels; ++l) {
    const int n = cfg.resolution(l);
    std::vector<double> feat(cfg.features, 0.0);
    std::vector<int> base(cfg.dims);
    for (int d = 0; d < cfg.dims; ++d) {
      const double x = std::clamp(p[d], 0.0, 1.0) * n;
      base[d] = std::min(int(std::floor(x)), n - 1);
    }
    for (int corner = 0; corner < (1 << cfg.dims); ++corner) {
      std::vector<std::uint32_t> c(cfg.dims);
      double w = 1;
      for (int d = 0; d < cfg.dims; ++d) {
        const int off = (corner >> d) & 1;
        c[d] = std::uint32_t(base[d] + off);
        const double x = std::clamp(p[d], 0.0, 1.0) * n;
        w *= 1.0 - std::abs(x - double(c[d]));
      }
      const auto row = oracle_index(c, n, cfg.table_size);
      const auto vals = grid.tables()[l].tensor.values();
      for (int f = 0; f < cfg.features; ++f) feat[f] += w * vals[row * cfg.features + f];
    }
    out.insert(out.end(), feat.begin(), feat.end());
  }
  return out;
}

// Textbook hexcone HSV, h in [0,1).
inline std::array<double, 3> ref_rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double v = mx;
  if (mx == mn) return {0, 0, v};
  const double s = (mx - mn) / mx;
  const double rc = (mx - r) / (mx - mn), gc = (mx - g) / (mx - mn), bc = (mx - b) / (mx - mn);
  double h;
  if (r == mx)
    h = bc - gc;
  else if (g == mx)
    h = 2.0 + rc - bc;
  else
    h = 4.0 + gc - rc;
  h = std::fmod(h / 6.0, 1.0);
  if (h < 0) h += 1;
  return {h, s, v};
}

inline std::array<double, 3> ref_hsv_to_rgb(double h, double s, double v) {
  if (s == 0) return {v, v, v};
  const int i = static_cast<int>(h * 6.0) % 6;
  const double f = h * 6.0 - std::floor(h * 6.0);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline std::array<double, 3> ref_adjust(std::array<double, 3> c, const AdjustDeltas& d) {
  auto hsv = ref_rgb_to_hsv(c[0], c[1], c[2]);
  double h = hsv[0] + d.hue / 360.0;
  h -= std::floor(h);
  const double s = std::clamp(hsv[1] + d.saturation, 0.0, 1.0);
  const double v = std::clamp(hsv[2] + d.brightness, 0.0, 1.0);
  return ref_hsv_to_rgb(h, s, v);
}

inline double seg_dist(double px, double py, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y, l2 = dx * dx + dy * dy;
  double t = l2 > 0 ? ((px - a.x) * dx + (py - a.y) * dy) / l2 : 0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - a.x - t * dx, py - a.y - t * dy);
}

inline bool chain_covers(const std::vector<Point2>& chain, double width, double px, double py) {
  if (chain.size() == 1) return std::hypot(px - chain[0].x, py - chain[0].y) <= width / 2;
  for (std::size_t s = 0; s + 1 < chain.size(); ++s)
    if (seg_dist(px, py, chain[s], chain[s + 1]) <= width / 2) return true;
  return false;
}

// Texel centre nearest to (u, v) on the R/2 x R grid of a layer.
inline std::array<double, 2> texel_centre(double u, double v, Layer l) {
  const int r = kAtlasRasterResolution;
  const double off = l == Layer::foreground ? 0.5 : 0.0;
  const int i = std::clamp(int(std::floor((u - off) * r)), 0, r / 2 - 1);
  const int j = std::clamp(int(std::floor(v * r)), 0, r - 1);
  return {off + (i + 0.5) / r, (j + 0.5) / r};
}

// Straight-line reimplementation of the documented composition order.
inline std::array<double, 3> reference_pixel(const PixelCoord& p, const EditDocument& doc,
                                      const VideoMapping& m, const VideoClip& clip) {
  const PixelCoord one[] = {p};
  AtlasCoord uv[2] = {m.forward_map(one, Layer::background)[0], m.forward_map(one, Layer::foreground)[0]};
  const double alpha = m.opacity(one)[0];
  const Rgb src = clip.color(int(p.x), int(p.y), p.t);
  std::array<double, 3> c = {src[0], src[1], src[2]};
  const Layer order[2] = {Layer::background, Layer::foreground};
  auto weight = [&](Layer l) { return l == Layer::foreground ? alpha : 1 - alpha; };
  auto over = [&](std::array<double, 3> top, double a) {
    for (int k = 0; k < 3; ++k) c[k] = a * top[k] + (1 - a) * c[k];
  };
  const auto& vis = doc.visibility();

  for (int li = 0; li < 2; ++li) {
    const Layer l = order[li];
    const auto tc = texel_centre(uv[li].u, uv[li].v, l);
    std::array<double, 3> adj = c;
    bool any = false;
    for (const auto& e : doc.edits()) {
      const auto* ms = std::get_if<MetadataStroke>(&e.payload);
      if (!ms || !vis.metadata || ms->region.layer != l) continue;
      if (!chain_covers(ms->region.atlas_chain, ms->region.width, tc[0], tc[1])) continue;
      adj = ref_adjust(adj, ms->deltas);
      any = true;
    }
    if (any) over(adj, weight(l));
  }
  for (int li = 0; li < 2; ++li) {
    const Layer l = order[li];
    const auto tc = texel_centre(uv[li].u, uv[li].v, l);
    double ta = 0;
    std::array<double, 3> trgb{0, 0, 0};
    for (const auto& e : doc.edits()) {
      const auto* t = std::get_if<TextureEdit>(&e.payload);
      if (!t || !vis.texture || t->layer != l || t->mode != TextureMode::atlas_warped) continue;
      const double fx = (tc[0] - (t->anchor.x - t->width / 2)) / t->width;
      const double fy = (tc[1] - (t->anchor.y - t->height / 2)) / t->height;
      if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) continue;
      const int sx = std::min(t->image.width - 1, int(fx * t->image.width));
      const int sy = std::min(t->image.height - 1, int(fy * t->image.height));
      const auto* px = &t->image.data[(std::size_t(sy) * t->image.width + sx) * 4];
      const double a = px[3] / 255.0;
      if (a <= 0) continue;
      const double ao = a + ta * (1 - a);
      for (int k = 0; k < 3; ++k) trgb[k] = (px[k] / 255.0 * a + trgb[k] * ta * (1 - a)) / ao;
      ta = ao;
    }
    if (ta > 0) over(trgb, ta * weight(l));
  }
  for (int li = 0; li < 2; ++li) {
    const Layer l = order[li];
    const auto tc = texel_centre(uv[li].u, uv[li].v, l);
    const SketchStroke* top = nullptr;
    for (const auto& e : doc.edits()) {
      const auto* s = std::get_if<SketchStroke>(&e.payload);
      if (!s || !vis.sketch || s->layer != l) continue;
      if (chain_covers(s->atlas_chain, s->width, tc[0], tc[1])) top = s;
    }
    if (top) over({top->color[0], top->color[1], top->color[2]}, weight(l));
  }
  for (const auto& e : doc.edits()) {
    const auto* t = std::get_if<TextureEdit>(&e.payload);
    if (!t || !vis.texture || t->mode != TextureMode::point_tracked) continue;
    const AtlasCoord anchor[] = {{t->anchor.x, t->anchor.y, t->layer}};
    const int f[] = {p.t};
    const auto ctr = m.inverse_map(anchor, f)[0];
    const double fx = (p.x - (ctr.x - t->width / 2)) / t->width;
    const double fy = (p.y - (ctr.y - t->height / 2)) / t->height;
    if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) continue;
    const int sx = std::min(t->image.width - 1, int(fx * t->image.width));
    const int sy = std::min(t->image.height - 1, int(fy * t->image.height));
    const auto* px = &t->image.data[(std::size_t(sy) * t->image.width + sx) * 4];
    double a = px[3] / 255.0;
    if (t->alpha_multiply) a *= weight(t->layer);
    if (a > 0) over({px[0] / 255.0, px[1] / 255.0, px[2] / 255.0}, a);
  }
  return c;
}

inline RgbaImage random_texture(std::mt19937_64& rng, int w, int h, bool transparent = false) {
  RgbaImage img{w, h, std::vector<std::uint8_t>(std::size_t(w) * h * 4)};
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = transparent && i % 4 == 3 ? 0 : static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

inline SketchStroke atlas_stroke(std::vector<Point2> pts, Layer l, Rgb color, double width) {
  SketchStroke s;
  s.space = CoordSpace::atlas;
  s.points = std::move(pts);
  s.layer = l;
  s.color = color;
  s.width = width;
  prepare_stroke(s, nullptr);
  return s;
}

// Nine mixed edits on both layers around the layer centres, one of them a
// point-tracked texture.
inline EditDocument random_document(std::mt19937_64& rng, bool alpha_multiply) {
  std::uniform_real_distribution<double> du(-0.12, 0.12), unit(0, 1);
  EditDocument doc;
  for (int e = 0; e < 9; ++e) {
    const Layer l = unit(rng) < 0.5 ? Layer::foreground : Layer::background;
    const double cu = l == Layer::foreground ? 0.75 : 0.25;
    std::vector<Point2> pts;
    const int k = 1 + int(unit(rng) * 5);
    for (int i = 0; i < k; ++i) pts.push_back({cu + du(rng) * 0.8, 0.5 + du(rng)});
    switch (e % 3) {
      case 0: {
        MetadataStroke m;
        m.region = atlas_stroke(pts, l, {0, 0, 0}, 0.01 + 0.04 * unit(rng));
        m.deltas = {0.6 * unit(rng) - 0.3, 0.6 * unit(rng) - 0.3, 360 * unit(rng) - 180};
        doc.add(m);
        break;
      }
      case 1: {
        TextureEdit t;
        t.layer = l;
        t.image = random_texture(rng, 1 + int(unit(rng) * 7), 1 + int(unit(rng) * 7));
        t.anchor = {cu + du(rng) * 0.8, 0.5 + du(rng)};
        t.width = 0.02 + 0.1 * unit(rng);
        t.height = 0.02 + 0.1 * unit(rng);
        if (e == 4) {
          t.mode = TextureMode::point_tracked;
          t.width = 5 + 10 * unit(rng);
          t.height = 5 + 10 * unit(rng);
          t.alpha_multiply = alpha_multiply;
        }
        place_texture(t, doc);
        break;
      }
      default:
        doc.add(atlas_stroke(pts, l, {float(unit(rng)), float(unit(rng)), float(unit(rng))},
                             0.005 + 0.02 * unit(rng)));
    }
  }
  return doc;
}

}  // namespace inve::test
