#pragma once

// Training objectives. The *_term functions work on graph variables and are
// shared by the training loop and by tests with stub inputs; the *_loss
// functions evaluate a model on a batch of pixels.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "inve/atlas_model.hpp"
#include "inve/autodiff.hpp"
#include "inve/media_io.hpp"

namespace inve {

inline constexpr double kBceEps = 1e-6;

// mean over rows of ||pred - target||^2
template <class T>
ad::Var<T> reconstruction_term(ad::Var<T> pred, ad::Var<T> target);

// mean over rows of (|jx|^2 - |jy|^2)^2 + (jx . jy)^2
template <class T>
ad::Var<T> rigidity_term(ad::Var<T> jx, ad::Var<T> jy);

// sum_i w_i ||a_i - b_i||^2 / sum_i w_i; a constant 0 when there are no
// rows or the weights sum to zero.
template <class T>
ad::Var<T> consistency_term(ad::Var<T> a, ad::Var<T> b, std::span<const T> weights);

// mean over rows of r^2 + g^2 + b^2
template <class T>
ad::Var<T> sparsity_term(ad::Var<T> rgb);

// mean binary cross-entropy of alpha[n,1] against 0/1 targets, alpha clamped
// to [kBceEps, 1 - kBceEps]
template <class T>
ad::Var<T> bce_term(ad::Var<T> alpha, std::span<const T> targets);

// Normalized (x, y, t) rows for a list of pixels.
template <class T>
ad::Tensor<T> normalized_pixels(std::span<const PixelCoord> pixels, const VideoDims& dims);

// Finite-difference neighbours used by the rigidity loss: one pixel along +x
// (or -x on the right border) and along +y (or -y on the bottom border).
std::vector<PixelCoord> rigidity_neighbours(std::span<const PixelCoord> pixels,
                                            const VideoDims& dims, bool along_x);
// Normalized length of the one-pixel step: 1 / (max(W, H) - 1).
double rigidity_step(const VideoDims& dims);

// Batch members that have a usable flow target: t < N-1, flow flagged valid,
// and the displaced point inside the frame.
struct FlowPairs {
  std::vector<std::size_t> members;  // indices into the batch
  std::vector<PixelCoord> targets;   // (x + fx, y + fy, t + 1)
};
// Throws ConfigError when the clip has no flow.
FlowPairs flow_pairs(const VideoClip& clip, std::span<const PixelCoord> batch);

template <class T>
ad::Var<T> reconstruction_loss(ad::Graph<T>& g, const ModelBundle<T>& model, const VideoClip& clip,
                               std::span<const PixelCoord> batch);
template <class T>
ad::Var<T> rigidity_loss(ad::Graph<T>& g, const ModelBundle<T>& model,
                         std::span<const PixelCoord> batch, Layer layer);

template <class T>
struct ConsistencyResult {
  ad::Var<T> loss;
  std::size_t valid = 0;
};
// With alpha_weighted, each pair counts with the detached opacity of its
// layer at the source pixel (alpha for fg, 1 - alpha for bg).
template <class T>
ConsistencyResult<T> consistency_loss(ad::Graph<T>& g, const ModelBundle<T>& model,
                                      const VideoClip& clip, std::span<const PixelCoord> batch,
                                      Layer layer, bool alpha_weighted);
// k uv points drawn uniformly from the foreground square.
template <class T>
ad::Var<T> sparsity_loss(ad::Graph<T>& g, const ModelBundle<T>& model, std::size_t k,
                         std::mt19937_64& rng);
// Throws ConfigError when the clip has no masks.
template <class T>
ad::Var<T> alpha_bootstrap_loss(ad::Graph<T>& g, const ModelBundle<T>& model,
                                const VideoClip& clip, std::span<const PixelCoord> batch);

std::vector<AtlasCoord> sample_foreground_uv(std::size_t k, std::mt19937_64& rng);

}  // namespace inve
