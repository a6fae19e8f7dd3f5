#include "inve/tracking.hpp"

#include <json.hpp>

#include "inve/errors.hpp"

namespace inve {

Trajectory track_point(double x, double y, int t0, Layer layer, const VideoMapping& model,
                       int t_begin, int t_end) {
  if (!model.forward_ready() || !model.inverse_ready())
    throw ContractViolation("tracking needs trained forward and inverse maps");
  const VideoDims d = model.dims();
  if (t_end < 0) t_end = d.frames - 1;
  if (t_begin < 0 || t_end >= d.frames || t_begin > t_end)
    throw ContractViolation("track range [" + std::to_string(t_begin) + ", " + std::to_string(t_end) +
                            "] is empty or outside 0.." + std::to_string(d.frames - 1));
  Trajectory tr;
  tr.source = {x, y, t0};
  tr.layer = layer;
  tr.t_begin = t_begin;
  check_pixel(tr.source, d);
  tr.uv = model.forward_map(std::span<const PixelCoord>(&tr.source, 1), layer)[0];
  const auto n = static_cast<std::size_t>(t_end - t_begin + 1);
  std::vector<AtlasCoord> uv(n, tr.uv);
  std::vector<int> frames(n);
  for (std::size_t i = 0; i < n; ++i) frames[i] = t_begin + static_cast<int>(i);
  tr.points = model.inverse_map(uv, frames);
  return tr;
}

std::string trajectory_json(const Trajectory& tr) {
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t i = 0; i < tr.points.size(); ++i) {
    const auto& p = tr.points[i];
    a.push_back({{"t", tr.t_begin + static_cast<int>(i)}, {"x", p.x}, {"y", p.y},
                 {"out_of_frame", p.out_of_frame}});
  }
  return a.dump();
}

}  // namespace inve
