#include "inve/media_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "inve/errors.hpp"

namespace inve {

namespace fs = std::filesystem;

namespace {

constexpr float kFloMagic = 202021.25f;

std::string frame_name(int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d%s", i, ext);
  return buf;
}

std::vector<std::uint8_t> read_png_as(const fs::path& path, png_uint_32 format, int& w, int& h) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw LoadError(path.string() + ": " + image.message);
  image.format = format;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw LoadError(path.string() + ": " + msg);
  }
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  return data;
}

void write_png_as(const fs::path& path, png_uint_32 format, int w, int h, const std::uint8_t* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
}

std::vector<std::uint8_t> encode_as(png_uint_32 format, int w, int h, const std::uint8_t* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, data, 0, nullptr))
    throw IoError(std::string("png encode: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, data, 0, nullptr))
    throw IoError(std::string("png encode: ") + image.message);
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Number of files named %05d<ext> in dir; throws unless they are 0..n-1.
int count_sequence(const fs::path& dir, const char* ext) {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ext) ++count;
  }
  for (int i = 0; i < count; ++i) {
    if (!fs::exists(dir / frame_name(i, ext)))
      throw LoadError("missing " + (dir / frame_name(i, ext)).string() + " in a sequence of " +
                      std::to_string(count) + " files");
  }
  return count;
}

}  // namespace

std::uint8_t to_byte(float c) {
  if (!(c > 0.0f)) return 0;
  if (c >= 1.0f) return 255;
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

Rgb RgbImage::at(int x, int y) const {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  return {data[o] / 255.0f, data[o + 1] / 255.0f, data[o + 2] / 255.0f};
}

void RgbImage::set(int x, int y, const Rgb& c) {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  for (int k = 0; k < 3; ++k) data[o + k] = to_byte(c[k]);
}

FlowField::FlowField(int w, int h)
    : width(w),
      height(h),
      u(static_cast<std::size_t>(w) * h, 0.0f),
      v(static_cast<std::size_t>(w) * h, 0.0f),
      valid(static_cast<std::size_t>(w) * h, 1) {}

void VideoClip::validate() const {
  if (dims.width <= 0 || dims.height <= 0 || dims.frames <= 0)
    throw LoadError("clip has no pixels");
  if (static_cast<int>(frames.size()) != dims.frames)
    throw LoadError("clip declares " + std::to_string(dims.frames) + " frames but holds " +
                    std::to_string(frames.size()));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.width != dims.width || f.height != dims.height ||
        f.data.size() != static_cast<std::size_t>(f.width) * f.height * 3)
      throw LoadError("frame " + std::to_string(i) + " is " + std::to_string(f.width) + "x" +
                      std::to_string(f.height) + ", expected " + std::to_string(dims.width) + "x" +
                      std::to_string(dims.height));
  }
  if (!flow.empty()) {
    if (static_cast<int>(flow.size()) != dims.frames - 1)
      throw LoadError("clip has " + std::to_string(flow.size()) + " flow fields for " +
                      std::to_string(dims.frames) + " frames");
    const std::size_t n = static_cast<std::size_t>(dims.width) * dims.height;
    for (std::size_t i = 0; i < flow.size(); ++i) {
      const auto& f = flow[i];
      if (f.width != dims.width || f.height != dims.height || f.u.size() != n || f.v.size() != n ||
          f.valid.size() != n)
        throw LoadError("flow field " + std::to_string(i) + " does not match the frame size");
    }
  }
  if (!masks.empty()) {
    if (static_cast<int>(masks.size()) != dims.frames)
      throw LoadError("clip has " + std::to_string(masks.size()) + " masks for " +
                      std::to_string(dims.frames) + " frames");
    for (std::size_t i = 0; i < masks.size(); ++i) {
      const auto& m = masks[i];
      if (m.width != dims.width || m.height != dims.height ||
          m.data.size() != static_cast<std::size_t>(m.width) * m.height)
        throw LoadError("mask " + std::to_string(i) + " is " + std::to_string(m.width) + "x" +
                        std::to_string(m.height) + ", expected " + std::to_string(dims.width) +
                        "x" + std::to_string(dims.height));
    }
  }
}

RgbImage read_png_rgb(const fs::path& path) {
  RgbImage img;
  img.data = read_png_as(path, PNG_FORMAT_RGB, img.width, img.height);
  return img;
}

GrayImage read_png_gray(const fs::path& path) {
  GrayImage img;
  img.data = read_png_as(path, PNG_FORMAT_GRAY, img.width, img.height);
  return img;
}

RgbaImage read_png_rgba(const fs::path& path) {
  RgbaImage img;
  img.data = read_png_as(path, PNG_FORMAT_RGBA, img.width, img.height);
  return img;
}

void write_png(const fs::path& path, const RgbImage& img) {
  write_png_as(path, PNG_FORMAT_RGB, img.width, img.height, img.data.data());
}

void write_png(const fs::path& path, const GrayImage& img) {
  write_png_as(path, PNG_FORMAT_GRAY, img.width, img.height, img.data.data());
}

void write_png(const fs::path& path, const RgbaImage& img) {
  write_png_as(path, PNG_FORMAT_RGBA, img.width, img.height, img.data.data());
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
  return encode_as(PNG_FORMAT_RGB, img.width, img.height, img.data.data());
}

std::vector<std::uint8_t> encode_png(const RgbaImage& img) {
  return encode_as(PNG_FORMAT_RGBA, img.width, img.height, img.data.data());
}

RgbaImage decode_png_rgba(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw LoadError(std::string("png decode: ") + image.message);
  image.format = PNG_FORMAT_RGBA;
  RgbaImage img;
  img.data.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw LoadError("png decode: " + msg);
  }
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  return img;
}

FlowField read_flo(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 12) throw LoadError(path.string() + ": truncated .flo header");
  float magic;
  std::int32_t w, h;
  std::memcpy(&magic, bytes.data(), 4);
  std::memcpy(&w, bytes.data() + 4, 4);
  std::memcpy(&h, bytes.data() + 8, 4);
  if (magic != kFloMagic) throw LoadError(path.string() + ": bad .flo magic");
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16))
    throw LoadError(path.string() + ": implausible .flo size " + std::to_string(w) + "x" +
                    std::to_string(h));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 12 + n * 8)
    throw LoadError(path.string() + ": .flo payload is " + std::to_string(bytes.size() - 12) +
                    " bytes, expected " + std::to_string(n * 8));
  FlowField f(w, h);
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(&f.u[i], bytes.data() + 12 + i * 8, 4);
    std::memcpy(&f.v[i], bytes.data() + 12 + i * 8 + 4, 4);
  }
  fs::path sidecar = path;
  sidecar.replace_extension(".valid");
  if (fs::exists(sidecar)) {
    const auto bits = read_bytes(sidecar);
    if (bits.size() != (n + 7) / 8)
      throw LoadError(sidecar.string() + ": " + std::to_string(bits.size()) + " bytes, expected " +
                      std::to_string((n + 7) / 8));
    for (std::size_t i = 0; i < n; ++i) f.valid[i] = (bits[i / 8] >> (i % 8)) & 1u;
  }
  return f;
}

void write_flo(const fs::path& path, const FlowField& flow) {
  const std::size_t n = static_cast<std::size_t>(flow.width) * flow.height;
  std::vector<std::uint8_t> bytes(12 + n * 8);
  const std::int32_t w = flow.width, h = flow.height;
  std::memcpy(bytes.data(), &kFloMagic, 4);
  std::memcpy(bytes.data() + 4, &w, 4);
  std::memcpy(bytes.data() + 8, &h, 4);
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(bytes.data() + 12 + i * 8, &flow.u[i], 4);
    std::memcpy(bytes.data() + 12 + i * 8 + 4, &flow.v[i], 4);
  }
  auto put = [](const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw IoError("short write to " + p.string());
  };
  put(path, bytes);
  fs::path sidecar = path;
  sidecar.replace_extension(".valid");
  const bool all_valid = std::all_of(flow.valid.begin(), flow.valid.end(), [](auto v) { return v != 0; });
  if (all_valid) {
    std::error_code ec;
    fs::remove(sidecar, ec);
    return;
  }
  std::vector<std::uint8_t> bits((n + 7) / 8, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (flow.valid[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  put(sidecar, bits);
}

VideoClip load_clip(const fs::path& dir) {
  const fs::path frames_dir = dir / "frames";
  if (!fs::is_directory(frames_dir)) throw LoadError("missing directory " + frames_dir.string());
  VideoClip clip;
  const int n = count_sequence(frames_dir, ".png");
  if (n == 0) throw LoadError(frames_dir.string() + " holds no frames");
  for (int i = 0; i < n; ++i) {
    RgbImage img = read_png_rgb(frames_dir / frame_name(i, ".png"));
    if (i > 0 && (img.width != clip.frames[0].width || img.height != clip.frames[0].height))
      throw LoadError((frames_dir / frame_name(i, ".png")).string() + " is " +
                      std::to_string(img.width) + "x" + std::to_string(img.height) + ", expected " +
                      std::to_string(clip.frames[0].width) + "x" + std::to_string(clip.frames[0].height));
    clip.frames.push_back(std::move(img));
  }
  clip.dims = {clip.frames[0].width, clip.frames[0].height, n};

  const fs::path flow_dir = dir / "flow";
  if (fs::is_directory(flow_dir)) {
    const int nf = count_sequence(flow_dir, ".flo");
    if (nf != n - 1)
      throw LoadError(flow_dir.string() + " holds " + std::to_string(nf) + " flow files for " +
                      std::to_string(n) + " frames");
    for (int i = 0; i < nf; ++i) {
      const fs::path p = flow_dir / frame_name(i, ".flo");
      FlowField f = read_flo(p);
      if (f.width != clip.dims.width || f.height != clip.dims.height)
        throw LoadError(p.string() + " is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                        ", frames are " + std::to_string(clip.dims.width) + "x" +
                        std::to_string(clip.dims.height));
      clip.flow.push_back(std::move(f));
    }
  }

  const fs::path mask_dir = dir / "masks";
  if (fs::is_directory(mask_dir)) {
    const int nm = count_sequence(mask_dir, ".png");
    if (nm != n)
      throw LoadError(mask_dir.string() + " holds " + std::to_string(nm) + " masks for " +
                      std::to_string(n) + " frames");
    for (int i = 0; i < nm; ++i) {
      const fs::path p = mask_dir / frame_name(i, ".png");
      GrayImage m = read_png_gray(p);
      if (m.width != clip.dims.width || m.height != clip.dims.height)
        throw LoadError(p.string() + " is " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                        ", frames are " + std::to_string(clip.dims.width) + "x" +
                        std::to_string(clip.dims.height));
      for (auto& v : m.data) v = v != 0 ? 1 : 0;
      clip.masks.push_back(std::move(m));
    }
  }
  clip.validate();
  return clip;
}

void save_clip(const VideoClip& clip, const fs::path& dir) {
  clip.validate();
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) throw IoError("cannot create " + (dir / "frames").string() + ": " + ec.message());
  for (int i = 0; i < clip.dims.frames; ++i) write_png(dir / "frames" / frame_name(i, ".png"), clip.frames[i]);
  if (clip.has_flow()) {
    fs::create_directories(dir / "flow");
    for (std::size_t i = 0; i < clip.flow.size(); ++i)
      write_flo(dir / "flow" / frame_name(static_cast<int>(i), ".flo"), clip.flow[i]);
  }
  if (clip.has_masks()) {
    fs::create_directories(dir / "masks");
    for (std::size_t i = 0; i < clip.masks.size(); ++i) {
      GrayImage m = clip.masks[i];
      for (auto& v : m.data) v = v != 0 ? 255 : 0;
      write_png(dir / "masks" / frame_name(static_cast<int>(i), ".png"), m);
    }
  }
}

void export_sequence(std::span<const RgbImage> frames, const fs::path& dir) {
  if (frames.empty()) throw ContractViolation("export_sequence: no frames");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create export directory " + dir.string());
  for (std::size_t i = 0; i < frames.size(); ++i)
    write_png(dir / frame_name(static_cast<int>(i), ".png"), frames[i]);
  nlohmann::json manifest = {
      {"count", frames.size()}, {"width", frames[0].width}, {"height", frames[0].height}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("short write to " + (dir / "manifest.json").string());
}

}  // namespace inve
