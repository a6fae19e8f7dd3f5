#pragma once

// edits.json and the texture images stored beside it.
//
//   {"version": n,
//    "visibility": {"metadata": b, "texture": b, "sketch": b},
//    "edits": [{"id": i, "kind": "sketch"|"texture"|"metadata", "layer": "fg"|"bg",
//               "payload": {...}}]}
//
// sketch payload:   space, frame, points [[x,y]..], atlas_points [[u,v]..], color [r,g,b], width
// metadata payload: space, frame, points, atlas_points, width, brightness, saturation, hue
// texture payload:  mode, image "tex_<fnv1a-64 hex>.png", anchor [u,v], size [w,h], alpha_multiply

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>

#include "inve/editing.hpp"

namespace inve {

// A malformed edit payload; field is a JSON path such as "payload.points[2]".
class EditFormatError : public std::runtime_error {
 public:
  EditFormatError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

using TextureLoader = std::function<RgbaImage(const std::string& file_name)>;

// Content-addressed file name of a texture image.
std::string texture_file_name(const RgbaImage& image);

std::string edit_json(const Edit& edit);
// The edits array alone, in insertion order.
std::string edits_json(const EditDocument& doc);
std::string document_json(const EditDocument& doc);
// Throws EditFormatError on malformed content.
EditDocument document_from_json(const std::string& text, const TextureLoader& textures);

// An edit as posted by a client: {"kind", "layer", "payload"}. Strokes come
// back without an atlas chain; texture payloads name an image the loader can
// resolve. Throws EditFormatError.
EditPayload parse_edit_request(const std::string& text, const TextureLoader& textures);

// Writes edits.json atomically and any missing texture files.
void save_document(const std::filesystem::path& dir, const EditDocument& doc);
// An absent edits.json yields an empty document.
EditDocument load_document(const std::filesystem::path& dir);

}  // namespace inve
