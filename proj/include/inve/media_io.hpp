#pragma once

// Clip directories, PNG rasters and Middlebury .flo optical flow.
//
// Clip layout:
//   frames/%05d.png   8-bit RGB
//   flow/%05d.flo     forward flow from frame i to i+1 (N-1 files)
//   flow/%05d.valid   optional validity bitmap: ceil(W*H/8) bytes, pixel i is
//                     bit (i % 8) of byte i / 8, row-major; absent means all valid
//   masks/%05d.png    foreground masks, nonzero = foreground
// flow/ and masks/ may be absent as a whole; a present directory must be complete.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "inve/atlas_model.hpp"

namespace inve {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved rgb, row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  Rgb at(int x, int y) const;
  void set(int x, int y, const Rgb& c);  // rounds clamp(c) * 255
  bool operator==(const RgbImage&) const = default;
};

struct RgbaImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved straight-alpha rgba

  bool operator==(const RgbaImage&) const = default;
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool operator==(const GrayImage&) const = default;
};

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;
  std::vector<std::uint8_t> valid;  // 0/1 per pixel

  FlowField() = default;
  FlowField(int w, int h);
  bool operator==(const FlowField&) const = default;
};

struct VideoClip {
  VideoDims dims;
  std::vector<RgbImage> frames;
  std::vector<FlowField> flow;   // empty or dims.frames - 1 fields
  std::vector<GrayImage> masks;  // empty or dims.frames masks, values 0/1

  bool has_flow() const { return !flow.empty(); }
  bool has_masks() const { return !masks.empty(); }
  Rgb color(int x, int y, int t) const { return frames[t].at(x, y); }
  // Throws LoadError describing the first inconsistency.
  void validate() const;
};

std::uint8_t to_byte(float c);

RgbImage read_png_rgb(const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);
RgbaImage read_png_rgba(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);
void write_png(const std::filesystem::path& path, const RgbaImage& img);

std::vector<std::uint8_t> encode_png(const RgbImage& img);
std::vector<std::uint8_t> encode_png(const RgbaImage& img);
RgbaImage decode_png_rgba(std::span<const std::uint8_t> bytes);

FlowField read_flo(const std::filesystem::path& path);
// Writes the .flo and, when any pixel is invalid, the .valid sidecar beside it.
void write_flo(const std::filesystem::path& path, const FlowField& flow);

VideoClip load_clip(const std::filesystem::path& dir);
void save_clip(const VideoClip& clip, const std::filesystem::path& dir);

// %05d.png per frame plus manifest.json {count, width, height}.
void export_sequence(std::span<const RgbImage> frames, const std::filesystem::path& dir);

}  // namespace inve
