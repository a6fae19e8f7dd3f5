#pragma once

// Shared fixtures: an analytic mapping stub, temp dirs and small helpers.

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "inve/atlas_model.hpp"
#include "inve/errors.hpp"
#include "inve/synthetic.hpp"

namespace inve::test {

// Frame-to-atlas mapping of a rigid synthetic scene: each layer maps a pixel
// to (centre of layer square) + s * (p - c_layer(t)), s atlas units per pixel.
// The fg reference point moves with (vx, vy) px/frame from (x0, y0).
class AffineStub : public VideoMapping {
 public:
  VideoDims d{64, 64, 8};
  double s = 0.3 / 63.0;
  double x0 = 20, y0 = 20, vx = 2, vy = 1;
  double bg_cx = 31.5, bg_cy = 31.5;
  bool inverse_trained = true;
  std::function<double(double, double, int)> alpha = [](double, double, int) { return 0.5; };

  VideoDims dims() const override { return d; }
  bool forward_ready() const override { return true; }
  bool inverse_ready() const override { return inverse_trained; }

  double cx(Layer l, int t) const { return l == Layer::foreground ? x0 + vx * t : bg_cx; }
  double cy(Layer l, int t) const { return l == Layer::foreground ? y0 + vy * t : bg_cy; }
  double u0(Layer l) const { return l == Layer::foreground ? 0.75 : 0.25; }

  AtlasCoord map(double x, double y, int t, Layer l) const {
    return {u0(l) + s * (x - cx(l, t)), 0.5 + s * (y - cy(l, t)), l};
  }

  std::vector<AtlasCoord> forward_map(std::span<const PixelCoord> pixels, Layer layer) const override {
    std::vector<AtlasCoord> out;
    for (const auto& p : pixels) {
      check_pixel(p, d);
      out.push_back(map(p.x, p.y, p.t, layer));
    }
    evals += pixels.size();
    return out;
  }
  std::vector<double> opacity(std::span<const PixelCoord> pixels) const override {
    std::vector<double> out;
    for (const auto& p : pixels) out.push_back(alpha(p.x, p.y, p.t));
    return out;
  }
  std::vector<FramePoint> inverse_map(std::span<const AtlasCoord> coords,
                                      std::span<const int> frames) const override {
    std::vector<FramePoint> out;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const Layer l = coords[i].layer;
      const double x = cx(l, frames[i]) + (coords[i].u - u0(l)) / s;
      const double y = cy(l, frames[i]) + (coords[i].v - 0.5) / s;
      const double wm = d.width - 1, hm = d.height - 1;
      out.push_back({std::clamp(x, 0.0, wm), std::clamp(y, 0.0, hm),
                     !(x >= 0 && x <= wm && y >= 0 && y <= hm)});
    }
    return out;
  }
  std::uint64_t forward_evaluations() const override { return evals.load(); }

  mutable std::atomic<std::uint64_t> evals{0};
};

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("inve-" + tag + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) : path(temp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace inve::test
