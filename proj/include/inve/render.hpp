#pragma once

// Edited-frame rendering: the source pixel composited with the atlas edit
// layers it maps to, then point-tracked textures in frame space.

#include <span>
#include <vector>

#include "inve/editing.hpp"
#include "inve/media_io.hpp"

namespace inve {

// Throws ContractViolation when the forward maps are untrained (or the
// inverse maps, if the document has point-tracked textures) or p is out of
// bounds.
Rgb render_edited_pixel(const PixelCoord& p, const EditDocument& doc, const VideoMapping& model,
                        const VideoClip& clip);

struct RenderedFrames {
  std::vector<RgbImage> frames;
  double seconds = 0;
  double fps = 0;  // frames / seconds
};

// Renders frame t with a prebuilt compositor.
RgbImage render_edited_frame(int t, const EditCompositor& compositor, const VideoMapping& model,
                             const VideoClip& clip);
RenderedFrames render_edited_frame(int t, const EditDocument& doc, const VideoMapping& model,
                                   const VideoClip& clip);
// Every listed frame (all frames when empty), timed as a whole.
RenderedFrames render_edited_clip(const EditDocument& doc, const VideoMapping& model,
                                  const VideoClip& clip, std::span<const int> frames = {});

// The layer's atlas sub-square sampled on a (size/2) x size grid, with the
// document's atlas-space edit layers of that layer optionally composited.
RgbImage render_atlas(const Model& model, Layer layer, int size, const EditDocument* doc = nullptr);

}  // namespace inve
