#pragma once

// Single-image coordinate-network fitting, used to compare how fast a
// hash-grid encoding and a sinusoidal positional encoding converge.

#include <cstdint>
#include <string_view>
#include <vector>

#include "inve/hash_grid.hpp"
#include "inve/media_io.hpp"

namespace inve {

enum class ImageEncoding { hash_grid, sinusoidal };
std::string_view encoding_name(ImageEncoding e);

struct ImageFitConfig {
  int iterations = 500;
  int batch = 2048;
  std::uint64_t seed = 1;
  double lr_hash = 1e-2;
  double lr_network = 1e-3;
  HashGridConfig grid{2, 8, 1u << 11, 2, 16, 256};
  int hidden_width = 64;  // hash-grid head
  int hidden_layers = 2;
  int frequencies = 10;   // sinusoidal baseline
  // Hidden width of the sinusoidal model; 0 picks the width whose parameter
  // count is closest to the hash-grid model's.
  int sinusoidal_width = 0;
};

struct ImageFitResult {
  ImageEncoding encoding = ImageEncoding::hash_grid;
  std::size_t parameters = 0;
  std::vector<double> batch_loss;  // per iteration, before the step
  double final_mse = 0;            // full-image MSE after the last step
};

// Deterministic size x size test image: octaves of value noise plus hard-edged
// discs and stripes.
RgbImage procedural_image(int size = 256, std::uint64_t seed = 5);

std::size_t hash_fit_parameters(const ImageFitConfig& config);
std::size_t sinusoidal_fit_parameters(const ImageFitConfig& config, int width);
int matched_sinusoidal_width(const ImageFitConfig& config);

ImageFitResult fit_image(const RgbImage& image, ImageEncoding encoding, const ImageFitConfig& config);

}  // namespace inve
