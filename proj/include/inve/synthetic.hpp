#pragma once

// Procedural test clips with exact flow, masks and point tracks.
//
// Pixel (i, j) covers the unit square [i, i+1) x [j, j+1); it belongs to the
// foreground when its centre (i + 0.5, j + 0.5) lies inside the moving shape.
// The shape translates by (vx, vy) px/frame and optionally rotates about its
// centre; the background is static.

#include <array>
#include <cstdint>
#include <optional>

#include "inve/media_io.hpp"

namespace inve {

enum class ShapeKind { rect, disc };

struct SyntheticSpec {
  int width = 64;
  int height = 64;
  int frames = 8;
  ShapeKind shape = ShapeKind::rect;
  double size = 16;  // side length or diameter, px
  double start_x = 12;
  double start_y = 12;
  double vx = 2;
  double vy = 1;
  double rotation_deg = 0;  // per frame
  double texture_cell = 8;  // value-noise lattice spacing, px
  std::uint64_t background_seed = 11;
  std::uint64_t foreground_seed = 23;
  std::optional<Rgb> background_color;  // constant colour instead of noise
  std::optional<Rgb> foreground_color;

  // Throws ConfigError when the shape leaves the frame at any t or the sizes
  // are not positive.
  void validate() const;
};

struct SyntheticClip {
  SyntheticSpec spec;
  VideoClip clip;

  // Shape centre at frame t (continuous coordinates).
  std::array<double, 2> center(double t) const;
  // True when the continuous point (px, py) lies inside the shape at frame t.
  bool inside(double px, double py, double t) const;
  // Whether pixel (x, y) of frame t is foreground.
  bool pixel_on_shape(double x, double y, int t) const { return inside(x + 0.5, y + 0.5, t); }
  // Ground-truth position at frame t of the scene point seen at pixel (x, y)
  // of frame t0: rigid shape motion for foreground pixels, fixed otherwise.
  std::array<double, 2> track(double x, double y, int t0, int t) const;
};

SyntheticClip generate_synthetic(const SyntheticSpec& spec);

// Seeded value noise in [0.1, 0.9]^3, smooth at the given lattice spacing.
Rgb value_noise(std::uint64_t seed, double x, double y, double cell);

}  // namespace inve
