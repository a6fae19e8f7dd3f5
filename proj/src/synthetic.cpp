#include "inve/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "inve/errors.hpp"

namespace inve {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy, int channel) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ull ^
                                       mix64(static_cast<std::uint64_t>(iy) + 0x1234567ull * channel)));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double rotation_rad(const SyntheticSpec& s, double t) {
  return s.rotation_deg * t * std::numbers::pi / 180.0;
}

// Point relative to the shape centre expressed in the shape's own frame.
std::array<double, 2> to_local(const SyntheticClip& c, double px, double py, double t) {
  const auto ctr = c.center(t);
  const double a = -rotation_rad(c.spec, t);
  const double dx = px - ctr[0], dy = py - ctr[1];
  return {std::cos(a) * dx - std::sin(a) * dy, std::sin(a) * dx + std::cos(a) * dy};
}

std::array<double, 2> from_local(const SyntheticClip& c, std::array<double, 2> l, double t) {
  const auto ctr = c.center(t);
  const double a = rotation_rad(c.spec, t);
  return {ctr[0] + std::cos(a) * l[0] - std::sin(a) * l[1],
          ctr[1] + std::sin(a) * l[0] + std::cos(a) * l[1]};
}

}  // namespace

Rgb value_noise(std::uint64_t seed, double x, double y, double cell) {
  const double gx = x / cell, gy = y / cell;
  const double fx = std::floor(gx), fy = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double sx = smooth(gx - fx), sy = smooth(gy - fy);
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    const double v00 = lattice(seed, ix, iy, c), v10 = lattice(seed, ix + 1, iy, c);
    const double v01 = lattice(seed, ix, iy + 1, c), v11 = lattice(seed, ix + 1, iy + 1, c);
    const double v = (v00 * (1 - sx) + v10 * sx) * (1 - sy) + (v01 * (1 - sx) + v11 * sx) * sy;
    out[c] = static_cast<float>(0.1 + 0.8 * v);
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (width < 2 || height < 2 || frames < 1) throw ConfigError("synthetic clip needs W,H >= 2 and N >= 1");
  if (!(size > 0)) throw ConfigError("synthetic shape size must be positive");
  if (!(texture_cell > 0)) throw ConfigError("texture cell must be positive");
  // Radius of the region the shape can sweep about its centre.
  double reach = size / 2;
  if (shape == ShapeKind::rect && rotation_deg != 0) reach = size / std::sqrt(2.0);
  for (int t = 0; t < frames; ++t) {
    const double cx = start_x + vx * t, cy = start_y + vy * t;
    double rx = reach, ry = reach;
    if (shape == ShapeKind::rect && rotation_deg == 0) rx = ry = size / 2;
    if (cx - rx < 0 || cx + rx > width || cy - ry < 0 || cy + ry > height)
      throw ConfigError("synthetic shape leaves the " + std::to_string(width) + "x" +
                        std::to_string(height) + " frame at t=" + std::to_string(t));
  }
}

std::array<double, 2> SyntheticClip::center(double t) const {
  return {spec.start_x + spec.vx * t, spec.start_y + spec.vy * t};
}

bool SyntheticClip::inside(double px, double py, double t) const {
  const auto l = to_local(*this, px, py, t);
  const double h = spec.size / 2;
  if (spec.shape == ShapeKind::disc) return l[0] * l[0] + l[1] * l[1] < h * h;
  return std::abs(l[0]) < h && std::abs(l[1]) < h;
}

std::array<double, 2> SyntheticClip::track(double x, double y, int t0, int t) const {
  if (!pixel_on_shape(x, y, t0)) return {x, y};
  // Track the pixel centre and report in pixel-index coordinates.
  const auto l = to_local(*this, x + 0.5, y + 0.5, t0);
  const auto p = from_local(*this, l, t);
  return {p[0] - 0.5, p[1] - 0.5};
}

SyntheticClip generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticClip sc;
  sc.spec = spec;
  VideoClip& clip = sc.clip;
  clip.dims = {spec.width, spec.height, spec.frames};
  const int w = spec.width, h = spec.height;
  for (int t = 0; t < spec.frames; ++t) {
    RgbImage frame(w, h);
    GrayImage mask{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        Rgb c;
        if (sc.inside(px, py, t)) {
          mask.data[static_cast<std::size_t>(y) * w + x] = 1;
          const auto l = to_local(sc, px, py, t);
          c = spec.foreground_color ? *spec.foreground_color
                                    : value_noise(spec.foreground_seed, l[0], l[1], spec.texture_cell);
        } else {
          c = spec.background_color ? *spec.background_color
                                    : value_noise(spec.background_seed, px, py, spec.texture_cell);
        }
        frame.set(x, y, c);
      }
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(mask));
  }
  for (int t = 0; t + 1 < spec.frames; ++t) {
    FlowField f(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto to = sc.track(x, y, t, t + 1);
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        f.u[i] = static_cast<float>(to[0] - x);
        f.v[i] = static_cast<float>(to[1] - y);
      }
    clip.flow.push_back(std::move(f));
  }
  clip.validate();
  return sc;
}

}  // namespace inve
