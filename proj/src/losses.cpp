#include "inve/losses.hpp"

#include <algorithm>

#include "inve/errors.hpp"

namespace inve {

template <class T>
ad::Var<T> reconstruction_term(ad::Var<T> pred, ad::Var<T> target) {
  const std::size_t n = pred.rows();
  if (n == 0) throw ContractViolation("reconstruction loss of an empty batch");
  return ad::scale(ad::sum(ad::square(ad::sub(pred, target))), T(1) / static_cast<T>(n));
}

template <class T>
ad::Var<T> rigidity_term(ad::Var<T> jx, ad::Var<T> jy) {
  ad::Var<T> nx = ad::row_sum(ad::square(jx));
  ad::Var<T> ny = ad::row_sum(ad::square(jy));
  ad::Var<T> dot = ad::row_sum(ad::mul(jx, jy));
  return ad::mean(ad::add(ad::square(ad::sub(nx, ny)), ad::square(dot)));
}

template <class T>
ad::Var<T> consistency_term(ad::Var<T> a, ad::Var<T> b, std::span<const T> weights) {
  ad::Graph<T>& g = *a.graph;
  if (weights.size() != a.rows())
    throw ContractViolation("consistency_term: " + std::to_string(weights.size()) +
                            " weights for " + std::to_string(a.rows()) + " pairs");
  double wsum = 0;
  for (T w : weights) wsum += static_cast<double>(w);
  if (a.rows() == 0 || !(wsum > 0)) return g.constant({1}, {T(0)});
  ad::Var<T> w = g.constant({a.rows(), 1}, std::vector<T>(weights.begin(), weights.end()));
  ad::Var<T> d = ad::row_sum(ad::square(ad::sub(a, b)));
  return ad::scale(ad::sum(ad::mul(d, w)), static_cast<T>(1.0 / wsum));
}

template <class T>
ad::Var<T> sparsity_term(ad::Var<T> rgb) {
  const std::size_t k = rgb.rows();
  if (k == 0) throw ContractViolation("sparsity loss with no samples");
  return ad::scale(ad::sum(ad::square(rgb)), T(1) / static_cast<T>(k));
}

template <class T>
ad::Var<T> bce_term(ad::Var<T> alpha, std::span<const T> targets) {
  ad::Graph<T>& g = *alpha.graph;
  const std::size_t n = alpha.rows();
  if (targets.size() != n)
    throw ContractViolation("bce: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(n) + " predictions");
  const T eps = static_cast<T>(kBceEps);
  ad::Var<T> a = ad::clamp(alpha, eps, T(1) - eps);
  std::vector<T> m(targets.begin(), targets.end()), not_m(n);
  for (std::size_t i = 0; i < n; ++i) not_m[i] = T(1) - m[i];
  ad::Var<T> pos = ad::mul(ad::log(a), g.constant({n, 1}, std::move(m)));
  ad::Var<T> neg = ad::mul(ad::log(ad::one_minus(a)), g.constant({n, 1}, std::move(not_m)));
  return ad::scale(ad::sum(ad::add(pos, neg)), T(-1) / static_cast<T>(n));
}

template <class T>
ad::Tensor<T> normalized_pixels(std::span<const PixelCoord> pixels, const VideoDims& dims) {
  std::vector<T> v(pixels.size() * 3);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto n = normalize(pixels[i], dims);
    for (int k = 0; k < 3; ++k) v[i * 3 + k] = static_cast<T>(n[k]);
  }
  return ad::Tensor<T>({pixels.size(), 3}, std::move(v));
}

std::vector<PixelCoord> rigidity_neighbours(std::span<const PixelCoord> pixels, const VideoDims& dims,
                                            bool along_x) {
  std::vector<PixelCoord> out(pixels.begin(), pixels.end());
  for (auto& p : out) {
    if (along_x)
      p.x = p.x + 1.0 <= dims.width - 1 ? p.x + 1.0 : p.x - 1.0;
    else
      p.y = p.y + 1.0 <= dims.height - 1 ? p.y + 1.0 : p.y - 1.0;
  }
  return out;
}

double rigidity_step(const VideoDims& dims) {
  return 1.0 / std::max(1, std::max(dims.width, dims.height) - 1);
}

FlowPairs flow_pairs(const VideoClip& clip, std::span<const PixelCoord> batch) {
  if (!clip.has_flow()) throw ConfigError("consistency loss needs optical flow, clip has none");
  FlowPairs out;
  const auto& d = clip.dims;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i];
    if (p.t >= d.frames - 1) continue;
    const int xi = static_cast<int>(p.x), yi = static_cast<int>(p.y);
    const auto& f = clip.flow[p.t];
    const std::size_t k = static_cast<std::size_t>(yi) * d.width + xi;
    if (!f.valid[k]) continue;
    const double tx = p.x + f.u[k], ty = p.y + f.v[k];
    if (!(tx >= 0 && tx <= d.width - 1 && ty >= 0 && ty <= d.height - 1)) continue;
    out.members.push_back(i);
    out.targets.push_back({tx, ty, p.t + 1});
  }
  return out;
}

template <class T>
ad::Var<T> reconstruction_loss(ad::Graph<T>& g, const ModelBundle<T>& model, const VideoClip& clip,
                               std::span<const PixelCoord> batch) {
  std::vector<T> target(batch.size() * 3);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Rgb c = clip.color(static_cast<int>(batch[i].x), static_cast<int>(batch[i].y), batch[i].t);
    for (int k = 0; k < 3; ++k) target[i * 3 + k] = static_cast<T>(c[k]);
  }
  ad::Var<T> pred = model.reconstruct(g, g.constant(normalized_pixels<T>(batch, clip.dims)));
  return reconstruction_term(pred, g.constant({batch.size(), 3}, std::move(target)));
}

template <class T>
ad::Var<T> rigidity_loss(ad::Graph<T>& g, const ModelBundle<T>& model,
                         std::span<const PixelCoord> batch, Layer layer) {
  const VideoDims d = model.dims();
  const T inv = static_cast<T>(1.0 / rigidity_step(d));
  const auto nx = rigidity_neighbours(batch, d, true);
  const auto ny = rigidity_neighbours(batch, d, false);
  ad::Var<T> m0 = model.forward_uv(g, g.constant(normalized_pixels<T>(batch, d)), layer);
  ad::Var<T> mx = model.forward_uv(g, g.constant(normalized_pixels<T>(nx, d)), layer);
  ad::Var<T> my = model.forward_uv(g, g.constant(normalized_pixels<T>(ny, d)), layer);
  return rigidity_term(ad::scale(ad::sub(mx, m0), inv), ad::scale(ad::sub(my, m0), inv));
}

template <class T>
ConsistencyResult<T> consistency_loss(ad::Graph<T>& g, const ModelBundle<T>& model,
                                      const VideoClip& clip, std::span<const PixelCoord> batch,
                                      Layer layer, bool alpha_weighted) {
  const FlowPairs pairs = flow_pairs(clip, batch);
  ConsistencyResult<T> r;
  r.valid = pairs.members.size();
  if (r.valid == 0) {
    r.loss = g.constant({1}, {T(0)});
    return r;
  }
  std::vector<PixelCoord> src;
  for (auto i : pairs.members) src.push_back(batch[i]);
  std::vector<T> w(src.size(), T(1));
  if (alpha_weighted) {
    const auto alpha = model.opacity(std::span<const PixelCoord>(src));
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = static_cast<T>(layer == Layer::foreground ? alpha[i] : 1.0 - alpha[i]);
  }
  ad::Var<T> a = model.forward_uv(g, g.constant(normalized_pixels<T>(src, clip.dims)), layer);
  ad::Var<T> b =
      model.forward_uv(g, g.constant(normalized_pixels<T>(pairs.targets, clip.dims)), layer);
  r.loss = consistency_term(a, b, std::span<const T>(w));
  return r;
}

std::vector<AtlasCoord> sample_foreground_uv(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> du(0.5, 1.0), dv(0.0, 1.0);
  std::vector<AtlasCoord> out(k);
  for (auto& c : out) {
    c.u = du(rng);
    c.v = dv(rng);
    c.layer = Layer::foreground;
  }
  return out;
}

template <class T>
ad::Var<T> sparsity_loss(ad::Graph<T>& g, const ModelBundle<T>& model, std::size_t k,
                         std::mt19937_64& rng) {
  if (k == 0) throw ContractViolation("sparsity loss needs k >= 1");
  const auto uv = sample_foreground_uv(k, rng);
  std::vector<T> in(k * 2);
  for (std::size_t i = 0; i < k; ++i) {
    in[i * 2] = static_cast<T>(uv[i].u);
    in[i * 2 + 1] = static_cast<T>(uv[i].v);
  }
  return sparsity_term(model.atlas_rgb(g, g.constant({k, 2}, std::move(in))));
}

template <class T>
ad::Var<T> alpha_bootstrap_loss(ad::Graph<T>& g, const ModelBundle<T>& model,
                                const VideoClip& clip, std::span<const PixelCoord> batch) {
  if (!clip.has_masks()) throw ConfigError("alpha bootstrap loss needs masks, clip has none");
  std::vector<T> m(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& p = batch[i];
    m[i] = clip.masks[p.t].data[static_cast<std::size_t>(p.y) * clip.dims.width +
                                static_cast<std::size_t>(p.x)]
               ? T(1)
               : T(0);
  }
  ad::Var<T> alpha = model.opacity(g, g.constant(normalized_pixels<T>(batch, clip.dims)));
  return bce_term(alpha, std::span<const T>(m));
}

#define INVE_INSTANTIATE(T)                                                                      \
  template ad::Var<T> reconstruction_term<T>(ad::Var<T>, ad::Var<T>);                            \
  template ad::Var<T> rigidity_term<T>(ad::Var<T>, ad::Var<T>);                                  \
  template ad::Var<T> consistency_term<T>(ad::Var<T>, ad::Var<T>, std::span<const T>);         \
  template ad::Var<T> sparsity_term<T>(ad::Var<T>);                                              \
  template ad::Var<T> bce_term<T>(ad::Var<T>, std::span<const T>);                               \
  template ad::Tensor<T> normalized_pixels<T>(std::span<const PixelCoord>, const VideoDims&);    \
  template ad::Var<T> reconstruction_loss<T>(ad::Graph<T>&, const ModelBundle<T>&,               \
                                             const VideoClip&, std::span<const PixelCoord>);     \
  template ad::Var<T> rigidity_loss<T>(ad::Graph<T>&, const ModelBundle<T>&,                     \
                                       std::span<const PixelCoord>, Layer);                      \
  template ConsistencyResult<T> consistency_loss<T>(ad::Graph<T>&, const ModelBundle<T>&,        \
                                                    const VideoClip&,                            \
                                                    std::span<const PixelCoord>, Layer, bool);   \
  template ad::Var<T> sparsity_loss<T>(ad::Graph<T>&, const ModelBundle<T>&, std::size_t,        \
                                       std::mt19937_64&);                                        \
  template ad::Var<T> alpha_bootstrap_loss<T>(ad::Graph<T>&, const ModelBundle<T>&,              \
                                              const VideoClip&, std::span<const PixelCoord>);

INVE_INSTANTIATE(float)
INVE_INSTANTIATE(double)

#undef INVE_INSTANTIATE

}  // namespace inve
