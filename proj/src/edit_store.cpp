#include "inve/edit_store.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "inve/errors.hpp"

namespace inve {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json point_list(const std::vector<Point2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y});
  return a;
}

json stroke_fields(const SketchStroke& s) {
  return {{"space", space_name(s.space)},
          {"frame", s.frame},
          {"points", point_list(s.points)},
          {"atlas_points", point_list(s.atlas_chain)},
          {"width", s.width}};
}

json payload_json(const EditPayload& payload) {
  return std::visit(
      [](const auto& p) -> json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SketchStroke>) {
          json j = stroke_fields(p);
          j["color"] = {p.color[0], p.color[1], p.color[2]};
          return j;
        } else if constexpr (std::is_same_v<P, MetadataStroke>) {
          json j = stroke_fields(p.region);
          j["brightness"] = p.deltas.brightness;
          j["saturation"] = p.deltas.saturation;
          j["hue"] = p.deltas.hue;
          return j;
        } else {
          return {{"mode", texture_mode_name(p.mode)},
                  {"image", texture_file_name(p.image)},
                  {"anchor", {p.anchor.x, p.anchor.y}},
                  {"size", {p.width, p.height}},
                  {"alpha_multiply", p.alpha_multiply}};
        }
      },
      payload);
}

json to_json(const Edit& e) {
  return {{"id", e.id},
          {"kind", kind_name(e.kind())},
          {"layer", layer_name(e.layer())},
          {"payload", payload_json(e.payload)}};
}

// Field readers that report a JSON path on failure.
const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) throw EditFormatError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw EditFormatError(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

std::string sub(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

double number(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_number()) throw EditFormatError(sub(path, key), "expected a number");
  return v.get<double>();
}

double number_or(const json& obj, const std::string& path, const char* key, double fallback) {
  return obj.contains(key) ? number(obj, path, key) : fallback;
}

std::string text(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_string()) throw EditFormatError(sub(path, key), "expected a string");
  return v.get<std::string>();
}

Point2 pair(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw EditFormatError(path, "expected [number, number]");
  return {v[0].get<double>(), v[1].get<double>()};
}

std::vector<Point2> points(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  const std::string p = sub(path, key);
  if (!v.is_array()) throw EditFormatError(p, "expected an array of [x, y] pairs");
  std::vector<Point2> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(pair(v[i], p + "[" + std::to_string(i) + "]"));
  return out;
}

template <class F>
auto enum_field(const json& obj, const std::string& path, const char* key, F parse) {
  const std::string s = text(obj, path, key);
  try {
    return parse(s);
  } catch (const ConfigError& e) {
    throw EditFormatError(sub(path, key), e.what());
  }
}

template <class F>
void checked(const std::string& path, F f) {
  try {
    f();
  } catch (const ContractViolation& e) {
    throw EditFormatError(path, e.what());
  }
}

SketchStroke read_stroke(const json& p, const std::string& path, Layer layer, bool with_chain) {
  SketchStroke s;
  s.layer = layer;
  s.space = enum_field(p, path, "space", parse_space);
  if (s.space == CoordSpace::frame) {
    const json& f = member(p, path, "frame");
    if (!f.is_number_integer()) throw EditFormatError(sub(path, "frame"), "expected an integer");
    s.frame = f.get<int>();
  }
  s.points = points(p, path, "points");
  if (s.points.empty()) throw EditFormatError(sub(path, "points"), "needs at least one point");
  s.width = number(p, path, "width");
  if (!(s.width > 0)) throw EditFormatError(sub(path, "width"), "must be positive");
  if (with_chain) s.atlas_chain = points(p, path, "atlas_points");
  return s;
}

EditPayload read_payload(const json& j, const std::string& path, const TextureLoader& textures,
                         bool with_chain) {
  const EditKind kind = enum_field(j, path, "kind", parse_kind);
  const Layer layer = enum_field(j, path, "layer", parse_layer);
  const std::string pp = sub(path, "payload");
  const json& p = member(j, path, "payload");
  if (!p.is_object()) throw EditFormatError(pp, "expected an object");
  switch (kind) {
    case EditKind::sketch: {
      SketchStroke s = read_stroke(p, pp, layer, with_chain);
      const json& c = member(p, pp, "color");
      if (!c.is_array() || c.size() != 3)
        throw EditFormatError(sub(pp, "color"), "expected [r, g, b]");
      for (int k = 0; k < 3; ++k) {
        if (!c[k].is_number()) throw EditFormatError(sub(pp, "color"), "expected [r, g, b]");
        const double v = c[k].get<double>();
        if (!(v >= 0 && v <= 1)) throw EditFormatError(sub(pp, "color"), "components must lie in [0,1]");
        s.color[k] = static_cast<float>(v);
      }
      return s;
    }
    case EditKind::metadata: {
      MetadataStroke m;
      m.region = read_stroke(p, pp, layer, with_chain);
      m.deltas.brightness = number_or(p, pp, "brightness", 0);
      m.deltas.saturation = number_or(p, pp, "saturation", 0);
      m.deltas.hue = number_or(p, pp, "hue", 0);
      checked(pp, [&] { m.deltas.validate(); });
      return m;
    }
    case EditKind::texture: {
      TextureEdit t;
      t.layer = layer;
      t.mode = enum_field(p, pp, "mode", parse_texture_mode);
      t.anchor = pair(member(p, pp, "anchor"), sub(pp, "anchor"));
      const Point2 size = pair(member(p, pp, "size"), sub(pp, "size"));
      t.width = size.x;
      t.height = size.y;
      if (p.contains("alpha_multiply")) {
        if (!p["alpha_multiply"].is_boolean())
          throw EditFormatError(sub(pp, "alpha_multiply"), "expected a boolean");
        t.alpha_multiply = p["alpha_multiply"].get<bool>();
      }
      const std::string name = text(p, pp, "image");
      try {
        t.image = textures(name);
      } catch (const std::exception& e) {
        throw EditFormatError(sub(pp, "image"), e.what());
      }
      checked(pp, [&] { t.validate(); });
      return t;
    }
  }
  throw EditFormatError(sub(path, "kind"), "unsupported");
}

json parse(const std::string& s, const char* what) {
  try {
    return json::parse(s);
  } catch (const json::parse_error& e) {
    throw EditFormatError("", std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string texture_file_name(const RgbaImage& image) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(image.width),
                                 static_cast<std::uint32_t>(image.height)};
  h = fnv1a(h, dims, sizeof dims);
  h = fnv1a(h, image.data.data(), image.data.size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "tex_%016llx.png", static_cast<unsigned long long>(h));
  return buf;
}

std::string edit_json(const Edit& edit) { return to_json(edit).dump(); }

std::string edits_json(const EditDocument& doc) {
  json a = json::array();
  for (const auto& e : doc.edits()) a.push_back(to_json(e));
  return a.dump();
}

std::string document_json(const EditDocument& doc) {
  json a = json::array();
  for (const auto& e : doc.edits()) a.push_back(to_json(e));
  const auto& v = doc.visibility();
  json j = {{"version", doc.version()},
            {"visibility", {{"metadata", v.metadata}, {"texture", v.texture}, {"sketch", v.sketch}}},
            {"edits", std::move(a)}};
  return j.dump(2);
}

EditDocument document_from_json(const std::string& text_in, const TextureLoader& textures) {
  const json j = parse(text_in, "edit document");
  const json& v = member(j, "", "version");
  if (!v.is_number_unsigned()) throw EditFormatError("version", "expected a non-negative integer");
  LayerVisibility vis;
  if (j.contains("visibility")) {
    const json& o = j["visibility"];
    auto flag = [&](const char* k, bool& out) {
      if (!o.contains(k)) return;
      if (!o[k].is_boolean()) throw EditFormatError(std::string("visibility.") + k, "expected a boolean");
      out = o[k].get<bool>();
    };
    flag("metadata", vis.metadata);
    flag("texture", vis.texture);
    flag("sketch", vis.sketch);
  }
  const json& arr = member(j, "", "edits");
  if (!arr.is_array()) throw EditFormatError("edits", "expected an array");
  std::vector<Edit> edits;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "edits[" + std::to_string(i) + "]";
    const json& id = member(arr[i], path, "id");
    if (!id.is_number_unsigned() || id.get<std::uint64_t>() == 0)
      throw EditFormatError(path + ".id", "expected a positive integer");
    edits.push_back({id.get<std::uint64_t>(), read_payload(arr[i], path, textures, true)});
  }
  EditDocument doc;
  try {
    doc.restore(std::move(edits), vis, v.get<std::uint64_t>());
  } catch (const ContractViolation& e) {
    throw EditFormatError("edits", e.what());
  } catch (const LoadError& e) {
    throw EditFormatError("edits", e.what());
  }
  return doc;
}

EditPayload parse_edit_request(const std::string& text_in, const TextureLoader& textures) {
  const json j = parse(text_in, "edit");
  if (!j.is_object()) throw EditFormatError("", "expected an object");
  return read_payload(j, "", textures, false);
}

void save_document(const fs::path& dir, const EditDocument& doc) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& e : doc.edits())
    if (const auto* t = std::get_if<TextureEdit>(&e.payload)) {
      const fs::path p = dir / texture_file_name(t->image);
      if (!fs::exists(p)) write_png(p, t->image);
    }
  const fs::path target = dir / "edits.json", tmp = dir / "edits.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << document_json(doc);
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot replace " + target.string() + ": " + ec.message());
}

EditDocument load_document(const fs::path& dir) {
  const fs::path p = dir / "edits.json";
  if (!fs::exists(p)) return {};
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return document_from_json(ss.str(), [&](const std::string& name) {
      if (name.find('/') != std::string::npos || name.find("..") != std::string::npos)
        throw LoadError("bad texture name " + name);
      return read_png_rgba(dir / name);
    });
  } catch (const EditFormatError& e) {
    throw LoadError(p.string() + ": " + e.what());
  }
}

}  // namespace inve
