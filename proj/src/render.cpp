#include "inve/render.hpp"

#include <chrono>

#include "inve/errors.hpp"

namespace inve {

namespace {

void check_ready(const VideoMapping& model, const EditCompositor& comp) {
  if (!model.forward_ready()) throw ContractViolation("cannot render edits: model is not trained");
  if (comp.needs_inverse() && !model.inverse_ready())
    throw ContractViolation("point-tracked textures need trained inverse maps");
}

void check_clip(const VideoMapping& model, const VideoClip& clip) {
  if (!(model.dims() == clip.dims)) throw ContractViolation("model and clip dimensions differ");
}

// Frame-space centre of every point-tracked texture at frame t.
std::vector<FramePoint> tracked_centres(const EditCompositor& comp, const VideoMapping& model, int t) {
  const auto& tex = comp.tracked_textures();
  if (tex.empty()) return {};
  std::vector<AtlasCoord> uv;
  for (const auto& e : tex) uv.push_back({e.anchor.x, e.anchor.y, e.layer});
  std::vector<int> frames(tex.size(), t);
  return model.inverse_map(uv, frames);
}

}  // namespace

Rgb render_edited_pixel(const PixelCoord& p, const EditDocument& doc, const VideoMapping& model,
                        const VideoClip& clip) {
  check_clip(model, clip);
  check_pixel(p, clip.dims);
  const EditCompositor comp(doc);
  check_ready(model, comp);
  const std::span<const PixelCoord> one(&p, 1);
  const AtlasCoord fg = model.forward_map(one, Layer::foreground)[0];
  const AtlasCoord bg = model.forward_map(one, Layer::background)[0];
  const double alpha = model.opacity(one)[0];
  Rgb c = clip.color(static_cast<int>(p.x), static_cast<int>(p.y), p.t);
  c = comp.composite_atlas(c, fg, bg, alpha);
  const auto centres = tracked_centres(comp, model, p.t);
  for (std::size_t k = 0; k < centres.size(); ++k)
    c = comp.composite_tracked(c, k, centres[k].x, centres[k].y, p.x, p.y, alpha);
  return c;
}

RgbImage render_edited_frame(int t, const EditCompositor& comp, const VideoMapping& model,
                             const VideoClip& clip) {
  check_clip(model, clip);
  check_ready(model, comp);
  if (t < 0 || t >= clip.dims.frames)
    throw ContractViolation("frame " + std::to_string(t) + " out of range");
  const int w = clip.dims.width, h = clip.dims.height;
  std::vector<PixelCoord> px;
  px.reserve(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) px.push_back({double(x), double(y), t});
  const auto fg = model.forward_map(px, Layer::foreground);
  const auto bg = model.forward_map(px, Layer::background);
  const auto alpha = model.opacity(px);
  const auto centres = tracked_centres(comp, model, t);
  RgbImage out = clip.frames[t];
  for (std::size_t i = 0; i < px.size(); ++i) {
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    const Rgb src = clip.color(x, y, t);
    Rgb c = comp.composite_atlas(src, fg[i], bg[i], alpha[i]);
    for (std::size_t k = 0; k < centres.size(); ++k)
      c = comp.composite_tracked(c, k, centres[k].x, centres[k].y, x, y, alpha[i]);
    if (c != src) out.set(x, y, c);
  }
  return out;
}

RenderedFrames render_edited_frame(int t, const EditDocument& doc, const VideoMapping& model,
                                   const VideoClip& clip) {
  const int frames[] = {t};
  return render_edited_clip(doc, model, clip, frames);
}

RenderedFrames render_edited_clip(const EditDocument& doc, const VideoMapping& model,
                                  const VideoClip& clip, std::span<const int> frames) {
  const auto start = std::chrono::steady_clock::now();
  const EditCompositor comp(doc);
  RenderedFrames r;
  if (frames.empty()) {
    for (int t = 0; t < clip.dims.frames; ++t) r.frames.push_back(render_edited_frame(t, comp, model, clip));
  } else {
    for (int t : frames) r.frames.push_back(render_edited_frame(t, comp, model, clip));
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.fps = r.seconds > 0 ? static_cast<double>(r.frames.size()) / r.seconds : 0.0;
  return r;
}

RgbImage render_atlas(const Model& model, Layer layer, int size, const EditDocument* doc) {
  if (size < 2 || size % 2 != 0) throw ContractViolation("atlas image size must be even and >= 2");
  const int w = size / 2, h = size;
  const double off = layer_u_offset(layer);
  std::vector<AtlasCoord> uv;
  uv.reserve(static_cast<std::size_t>(w) * h);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      uv.push_back({off + (i + 0.5) / (2.0 * w), (j + 0.5) / h, layer});
  const auto rgb = model.atlas_color(uv);
  std::optional<EditCompositor> comp;
  if (doc && !doc->empty()) comp.emplace(*doc);
  RgbImage out(w, h);
  // Opacity 1 for the foreground square, 0 for the background one, so the
  // chosen layer's edits apply in full.
  const double alpha = layer == Layer::foreground ? 1.0 : 0.0;
  for (std::size_t k = 0; k < uv.size(); ++k) {
    Rgb c = rgb[k];
    if (comp) c = comp->composite_atlas(c, uv[k], uv[k], alpha);
    out.set(static_cast<int>(k % w), static_cast<int>(k / w), c);
  }
  return out;
}

}  // namespace inve
