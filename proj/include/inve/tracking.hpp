#pragma once

// Point trajectories: map a pixel to its layer's atlas once, then map that
// atlas point back into every frame of the range.

#include <string>
#include <vector>

#include "inve/atlas_model.hpp"

namespace inve {

struct Trajectory {
  PixelCoord source;
  Layer layer = Layer::foreground;
  AtlasCoord uv;
  int t_begin = 0;
  std::vector<FramePoint> points;  // points[i] is frame t_begin + i

  int t_end() const { return t_begin + static_cast<int>(points.size()) - 1; }
  const FramePoint& at(int t) const { return points.at(static_cast<std::size_t>(t - t_begin)); }
};

// Frames t_begin..t_end inclusive; t_end < 0 means the last frame. Throws
// ContractViolation when the inverse maps are untrained, the source is out of
// bounds or the range is empty or outside the clip.
Trajectory track_point(double x, double y, int t0, Layer layer, const VideoMapping& model,
                       int t_begin = 0, int t_end = -1);

// [{"t":..,"x":..,"y":..,"out_of_frame":..}, ...]
std::string trajectory_json(const Trajectory& tr);

}  // namespace inve
