#include "inve/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "inve/errors.hpp"
#include "inve/losses.hpp"

namespace inve {

using json = nlohmann::json;

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.99;
constexpr double kEpsHash = 1e-15;
constexpr double kEpsNetwork = 1e-8;

void check_finite(double v, const char* term, std::uint64_t iteration) {
  if (!std::isfinite(v)) throw TrainingDiverged(term, static_cast<long>(iteration));
}

void step(std::vector<ad::Parameter<float>*>& params, const TrainConfig& config) {
  std::vector<ad::Parameter<float>*> hash, net;
  for (auto* p : params) {
    p->tensor.ensure_grad();
    (p->group == ad::ParamGroup::hash_table ? hash : net).push_back(p);
  }
  ad::adam_step<float>(hash, config.lr_hash, kBeta1, kBeta2, kEpsHash);
  ad::adam_step<float>(net, config.lr_network, kBeta1, kBeta2, kEpsNetwork);
}

// Throughput over the last few iterations.
class RateMeter {
 public:
  double tick() {
    const auto now = std::chrono::steady_clock::now();
    stamps_.push_back(now);
    if (stamps_.size() > 11) stamps_.pop_front();
    if (stamps_.size() < 2) return 0.0;
    const double secs = std::chrono::duration<double>(stamps_.back() - stamps_.front()).count();
    return secs > 0 ? static_cast<double>(stamps_.size() - 1) / secs : 0.0;
  }
  void start() { stamps_.assign(1, std::chrono::steady_clock::now()); }

 private:
  std::deque<std::chrono::steady_clock::time_point> stamps_;
};

void require_nonneg(double v, const char* name) {
  if (!(v >= 0) || !std::isfinite(v))
    throw ConfigError(std::string("loss weight '") + name + "' must be a finite value >= 0");
}

template <class V>
void read_key(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
  }
}

}  // namespace

void LossWeights::validate() const {
  require_nonneg(recon, "recon");
  require_nonneg(rigid, "rigid");
  require_nonneg(flow, "flow");
  require_nonneg(sparse, "sparse");
  require_nonneg(alpha_bootstrap, "alpha_bootstrap");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  // At 64 px one pixel spans ~0.005 atlas units, so consistency needs a
  // heavier weight than the reconstruction-dominant default to hold the
  // foreground mapping still.
  c.weights.flow = 5.0;
  // Without mask supervision late in training, pixels next to the shape edge
  // keep alpha near 0.01 and fg edits bleed onto them.
  c.bootstrap_iters = -2;
  return c;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.profile = "paper";
  c.forward_iters = 12000;
  c.inverse_iters = 4000;
  c.batch = 10000;
  c.early_stop.enabled = true;
  return c;
}

void TrainConfig::validate() const {
  ModelConfig::named(profile);
  if (forward_iters < 0 || inverse_iters < 0) throw ConfigError("iteration counts must be >= 0");
  if (bootstrap_iters < -2) throw ConfigError("bootstrap_iters must be >= -2");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (snapshot_interval < 1) throw ConfigError("snapshot_interval must be >= 1");
  if (sparsity_samples < 1) throw ConfigError("sparsity_samples must be >= 1");
  if (!(lr_hash > 0) || !(lr_network > 0)) throw ConfigError("learning rates must be positive");
  if (early_stop.window < 2) throw ConfigError("early_stop.window must be >= 2");
  if (early_stop.min_iters < 0) throw ConfigError("early_stop.min_iters must be >= 0");
  weights.validate();
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("training config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  reject_unknown(j,
                 {"profile", "forward_iters", "inverse_iters", "batch", "seed", "snapshot_interval",
                  "bootstrap_iters", "sparsity_samples", "alpha_weighted_flow", "lr", "weights",
                  "early_stop"},
                 "training config");
  std::string profile = "desk";
  read_key(j, "profile", profile);
  if (profile != "desk" && profile != "paper")
    throw ConfigError("unknown training profile '" + profile + "' (expected desk or paper)");
  TrainConfig c = profile == "paper" ? TrainConfig::paper() : TrainConfig::desk();
  read_key(j, "forward_iters", c.forward_iters);
  read_key(j, "inverse_iters", c.inverse_iters);
  read_key(j, "batch", c.batch);
  read_key(j, "seed", c.seed);
  read_key(j, "snapshot_interval", c.snapshot_interval);
  read_key(j, "bootstrap_iters", c.bootstrap_iters);
  read_key(j, "sparsity_samples", c.sparsity_samples);
  read_key(j, "alpha_weighted_flow", c.alpha_weighted_flow);
  if (j.contains("lr")) {
    const json& l = j["lr"];
    if (!l.is_object()) throw ConfigError("training config 'lr' must be an object");
    reject_unknown(l, {"hash", "network"}, "lr");
    read_key(l, "hash", c.lr_hash);
    read_key(l, "network", c.lr_network);
  }
  if (j.contains("weights")) {
    const json& w = j["weights"];
    if (!w.is_object()) throw ConfigError("training config 'weights' must be an object");
    reject_unknown(w, {"recon", "rigid", "flow", "sparse", "alpha_bootstrap"}, "weights");
    read_key(w, "recon", c.weights.recon);
    read_key(w, "rigid", c.weights.rigid);
    read_key(w, "flow", c.weights.flow);
    read_key(w, "sparse", c.weights.sparse);
    read_key(w, "alpha_bootstrap", c.weights.alpha_bootstrap);
  }
  if (j.contains("early_stop")) {
    const json& e = j["early_stop"];
    if (!e.is_object()) throw ConfigError("training config 'early_stop' must be an object");
    reject_unknown(e, {"enabled", "window", "min_iters"}, "early_stop");
    read_key(e, "enabled", c.early_stop.enabled);
    read_key(e, "window", c.early_stop.window);
    read_key(e, "min_iters", c.early_stop.min_iters);
  }
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {{"profile", c.profile},
            {"forward_iters", c.forward_iters},
            {"inverse_iters", c.inverse_iters},
            {"batch", c.batch},
            {"seed", c.seed},
            {"snapshot_interval", c.snapshot_interval},
            {"bootstrap_iters", c.bootstrap_iters},
            {"sparsity_samples", c.sparsity_samples},
            {"alpha_weighted_flow", c.alpha_weighted_flow},
            {"lr", {{"hash", c.lr_hash}, {"network", c.lr_network}}},
            {"weights",
             {{"recon", c.weights.recon},
              {"rigid", c.weights.rigid},
              {"flow", c.weights.flow},
              {"sparse", c.weights.sparse},
              {"alpha_bootstrap", c.weights.alpha_bootstrap}}},
            {"early_stop",
             {{"enabled", c.early_stop.enabled},
              {"window", c.early_stop.window},
              {"min_iters", c.early_stop.min_iters}}}};
  return j.dump(2);
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open training config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return train_config_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string_view phase_name(Phase p) { return p == Phase::forward ? "forward" : "inverse"; }

void LossHistory::push(const LossRecord& r) {
  if (capacity_ == 0) return;
  if (records_.size() == capacity_) records_.pop_front();
  records_.push_back(r);
}

std::string LossHistory::to_csv() const {
  std::ostringstream os;
  os.precision(9);
  os << "iteration,recon,rigid,flow,sparse,alpha,iters_per_sec,phase,inverse\n";
  for (const auto& r : records_) {
    os << r.iteration << ',' << r.recon << ',' << r.rigid << ',' << r.flow << ',' << r.sparse << ','
       << r.alpha << ',' << r.iters_per_sec << ',' << phase_name(r.phase) << ',' << r.inverse
       << '\n';
  }
  return os.str();
}

std::vector<PixelCoord> sample_batch(const VideoDims& dims, std::size_t n, std::mt19937_64& rng) {
  if (dims.pixel_count() == 0) throw ContractViolation("sample_batch on an empty clip");
  if (n == 0) throw ContractViolation("sample_batch needs n >= 1");
  std::uniform_int_distribution<std::uint64_t> pick(0, dims.pixel_count() - 1);
  const std::uint64_t plane = static_cast<std::uint64_t>(dims.width) * dims.height;
  std::vector<PixelCoord> out(n);
  for (auto& p : out) {
    const std::uint64_t k = pick(rng);
    p.t = static_cast<int>(k / plane);
    const std::uint64_t r = k % plane;
    p.y = static_cast<double>(r / dims.width);
    p.x = static_cast<double>(r % dims.width);
  }
  return out;
}

bool should_stop_early(const TrainState& state, const EarlyStopConfig& config) {
  if (state.iteration < static_cast<std::uint64_t>(config.min_iters)) return false;
  const std::size_t window = static_cast<std::size_t>(config.window);
  std::vector<double> flow;
  for (std::size_t i = state.history.size(); i-- > 0 && flow.size() < window;) {
    if (state.history[i].phase == Phase::forward) flow.push_back(state.history[i].flow);
  }
  if (flow.size() < window) return false;
  // flow[0] is the newest record.
  const std::size_t half = window / 2;
  double recent = 0, earlier = 0;
  for (std::size_t i = 0; i < half; ++i) recent += flow[i];
  for (std::size_t i = half; i < 2 * half; ++i) earlier += flow[i];
  recent /= static_cast<double>(half);
  earlier /= static_cast<double>(half);
  if (earlier <= 0) return true;
  return (earlier - recent) / earlier < 0.01;
}

ForwardObjective forward_objective(ad::Graph<float>& g, const Model& model, const VideoClip& clip,
                                   std::vector<PixelCoord> batch, const TrainConfig& config,
                                   std::uint64_t iteration, std::mt19937_64& rng) {
  const LossWeights& w = config.weights;
  const VideoDims d = clip.dims;
  const std::size_t n = batch.size();
  ForwardObjective out;

  std::vector<PixelCoord> targets;
  if (w.flow > 0) {
    FlowPairs pairs = flow_pairs(clip, batch);
    std::vector<PixelCoord> ordered;
    std::vector<char> used(n, 0);
    for (auto i : pairs.members) {
      ordered.push_back(batch[i]);
      used[i] = 1;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!used[i]) ordered.push_back(batch[i]);
    batch = std::move(ordered);
    targets = std::move(pairs.targets);
    out.flow_pairs = targets.size();
  }
  const std::size_t m = targets.size();
  const bool bootstrap = w.alpha_bootstrap > 0 && iteration < static_cast<std::uint64_t>(config.effective_bootstrap_iters());
  if (bootstrap && !clip.has_masks())
    throw ConfigError("alpha bootstrap weight is positive but the clip has no masks");

  // Stacked rows: batch | +x neighbours | +y neighbours | flow targets.
  std::vector<PixelCoord> stack(batch);
  if (w.rigid > 0) {
    const auto nx = rigidity_neighbours(batch, d, true);
    const auto ny = rigidity_neighbours(batch, d, false);
    stack.insert(stack.end(), nx.begin(), nx.end());
    stack.insert(stack.end(), ny.begin(), ny.end());
  }
  const std::size_t flow_begin = stack.size();
  stack.insert(stack.end(), targets.begin(), targets.end());

  ad::Var<float> xyt = g.constant(normalized_pixels<float>(batch, d));
  ad::Var<float> all = g.constant(normalized_pixels<float>(stack, d));
  const bool need_alpha = w.recon > 0 || (w.flow > 0 && config.alpha_weighted_flow) || bootstrap;
  ad::Var<float> alpha;
  if (need_alpha) alpha = model.opacity(g, xyt);

  std::vector<ad::Var<float>> weighted;
  auto add_term = [&](ad::Var<float> term, double weight, const char* name, double& slot) {
    slot = term.item();
    check_finite(slot, name, iteration);
    weighted.push_back(ad::scale(term, static_cast<float>(weight)));
  };

  const bool need_maps = w.recon > 0 || w.rigid > 0 || w.flow > 0;
  if (need_maps) {
    ad::Var<float> uv[2];
    ad::Var<float> uv0[2];
    for (int l = 0; l < 2; ++l) {
      const Layer layer = l == 0 ? Layer::foreground : Layer::background;
      uv[l] = model.forward_uv(g, all, layer);
      uv0[l] = stack.size() == n ? uv[l] : ad::slice_rows(uv[l], 0, n);
    }
    if (w.recon > 0) {
      std::vector<float> target(n * 3);
      for (std::size_t i = 0; i < n; ++i) {
        const Rgb c = clip.color(static_cast<int>(batch[i].x), static_cast<int>(batch[i].y), batch[i].t);
        for (int k = 0; k < 3; ++k) target[i * 3 + k] = c[k];
      }
      ad::Var<float> cf = model.atlas_rgb(g, uv0[0]);
      ad::Var<float> cb = model.atlas_rgb(g, uv0[1]);
      ad::Var<float> pred = ad::add(ad::mul_rows(cf, alpha), ad::mul_rows(cb, ad::one_minus(alpha)));
      add_term(reconstruction_term(pred, g.constant({n, 3}, std::move(target))), w.recon, "recon",
               out.recon);
    }
    if (w.rigid > 0) {
      const float inv = static_cast<float>(1.0 / rigidity_step(d));
      ad::Var<float> total;
      double value = 0;
      for (int l = 0; l < 2; ++l) {
        ad::Var<float> jx = ad::scale(ad::sub(ad::slice_rows(uv[l], n, 2 * n), uv0[l]), inv);
        ad::Var<float> jy = ad::scale(ad::sub(ad::slice_rows(uv[l], 2 * n, 3 * n), uv0[l]), inv);
        ad::Var<float> r = rigidity_term(jx, jy);
        total = l == 0 ? r : ad::add(total, r);
      }
      add_term(total, w.rigid, "rigid", value);
      out.rigid = value;
    }
    if (w.flow > 0) {
      ad::Var<float> total;
      if (m == 0) {
        total = g.constant({1}, {0.0f});
      } else {
        std::vector<float> wf(m, 1.0f), wb(m, 1.0f);
        if (config.alpha_weighted_flow) {
          const auto a = alpha.value();
          for (std::size_t i = 0; i < m; ++i) {
            wf[i] = a[i];
            wb[i] = 1.0f - a[i];
          }
        }
        for (int l = 0; l < 2; ++l) {
          ad::Var<float> src = ad::slice_rows(uv[l], 0, m);
          ad::Var<float> dst = ad::slice_rows(uv[l], flow_begin, flow_begin + m);
          ad::Var<float> c = consistency_term(src, dst, std::span<const float>(l == 0 ? wf : wb));
          total = l == 0 ? c : ad::add(total, c);
        }
      }
      double value = 0;
      add_term(total, w.flow, "flow", value);
      out.flow = value;
    }
  }
  if (w.sparse > 0) {
    add_term(sparsity_loss(g, model, static_cast<std::size_t>(config.sparsity_samples), rng),
             w.sparse, "sparse", out.sparse);
  }
  if (bootstrap) {
    std::vector<float> mask(n);
    for (std::size_t i = 0; i < n; ++i)
      mask[i] = clip.masks[batch[i].t].data[static_cast<std::size_t>(batch[i].y) * d.width +
                                            static_cast<std::size_t>(batch[i].x)]
                    ? 1.0f
                    : 0.0f;
    add_term(bce_term(alpha, std::span<const float>(mask)), w.alpha_bootstrap, "alpha", out.alpha);
  }
  if (weighted.empty()) {
    out.total = g.constant({1}, {0.0f});
  } else {
    out.total = weighted[0];
    for (std::size_t i = 1; i < weighted.size(); ++i) out.total = ad::add(out.total, weighted[i]);
  }
  check_finite(out.total.item(), "total", iteration);
  return out;
}

TrainState train_forward_phase(const VideoClip& clip, Model& model, const TrainConfig& config,
                               const TrainCallbacks& callbacks) {
  config.validate();
  clip.validate();
  if (model.dims() != clip.dims) throw ContractViolation("model and clip dimensions differ");
  if (config.weights.flow > 0 && !clip.has_flow())
    throw ConfigError("flow weight is positive but the clip has no optical flow");
  if (config.weights.alpha_bootstrap > 0 && config.effective_bootstrap_iters() > 0 && !clip.has_masks())
    throw ConfigError("alpha bootstrap weight is positive but the clip has no masks");

  TrainState state;
  state.seed = config.seed;
  std::mt19937_64 rng(config.seed);
  auto params = model.forward_parameters();
  RateMeter meter;
  meter.start();
  for (int it = 0; it < config.forward_iters; ++it) {
    if (callbacks.should_cancel && callbacks.should_cancel()) {
      state.cancelled = true;
      break;
    }
    auto batch = sample_batch(clip.dims, static_cast<std::size_t>(config.batch), rng);
    ad::Graph<float> g;
    ForwardObjective obj = forward_objective(g, model, clip, std::move(batch), config,
                                             state.iteration, rng);
    g.backward(obj.total);
    step(params, config);

    LossRecord rec;
    rec.iteration = state.iteration;
    rec.phase = Phase::forward;
    rec.recon = obj.recon;
    rec.rigid = obj.rigid;
    rec.flow = obj.flow;
    rec.sparse = obj.sparse;
    rec.alpha = obj.alpha;
    rec.iters_per_sec = meter.tick();
    state.history.push(rec);
    ++state.iteration;
    if (callbacks.on_progress) callbacks.on_progress(rec);
    if (callbacks.on_snapshot && state.iteration % config.snapshot_interval == 0)
      callbacks.on_snapshot(model, state.iteration);
    if (config.early_stop.enabled && should_stop_early(state, config.early_stop)) {
      state.stopped_early = true;
      break;
    }
  }
  if (!state.cancelled) model.set_forward_trained(true);
  if (callbacks.on_snapshot) callbacks.on_snapshot(model, state.iteration);
  return state;
}

void train_inverse_phase(const VideoClip& clip, Model& model, const TrainConfig& config,
                         TrainState& state, const TrainCallbacks& callbacks) {
  config.validate();
  if (!model.forward_ready())
    throw ContractViolation("inverse phase requested before the forward phase completed");
  if (state.phase != Phase::forward)
    throw ContractViolation("inverse phase already ran for this training state");
  if (model.dims() != clip.dims) throw ContractViolation("model and clip dimensions differ");
  state.phase = Phase::inverse;

  std::mt19937_64 rng(config.seed ^ 0x5bd1e995u);
  auto params = model.inverse_parameters();
  const VideoDims d = clip.dims;
  const std::size_t n = static_cast<std::size_t>(config.batch);
  RateMeter meter;
  meter.start();
  for (int it = 0; it < config.inverse_iters; ++it) {
    if (callbacks.should_cancel && callbacks.should_cancel()) {
      state.cancelled = true;
      break;
    }
    const auto batch = sample_batch(d, n, rng);
    const ad::Tensor<float> xyt = normalized_pixels<float>(batch, d);
    std::vector<float> uv[2], alpha;
    {
      ad::Graph<float> frozen(false);
      ad::Var<float> x = frozen.constant(xyt);
      for (int l = 0; l < 2; ++l) {
        auto v = model.forward_uv(frozen, x, l == 0 ? Layer::foreground : Layer::background).value();
        uv[l].assign(v.begin(), v.end());
      }
      auto a = model.opacity(frozen, x).value();
      alpha.assign(a.begin(), a.end());
    }
    std::vector<float> target(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      target[i * 2] = xyt[i * 3];
      target[i * 2 + 1] = xyt[i * 3 + 1];
    }
    ad::Graph<float> g;
    ad::Var<float> tgt = g.constant({n, 2}, target);
    ad::Var<float> total;
    for (int l = 0; l < 2; ++l) {
      const Layer layer = l == 0 ? Layer::foreground : Layer::background;
      std::vector<float> in(n * 3), w(n, 1.0f);
      double wsum = static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        in[i * 3] = uv[l][i * 2];
        in[i * 3 + 1] = uv[l][i * 2 + 1];
        in[i * 3 + 2] = xyt[i * 3 + 2];
      }
      if (layer == Layer::foreground) {
        wsum = 0;
        for (std::size_t i = 0; i < n; ++i) {
          w[i] = alpha[i];
          wsum += alpha[i];
        }
      }
      ad::Var<float> pred = model.inverse_xy(g, g.constant({n, 3}, std::move(in)), layer);
      ad::Var<float> err = ad::row_sum(ad::square(ad::sub(pred, tgt)));
      ad::Var<float> term = ad::scale(ad::sum(ad::mul(err, g.constant({n, 1}, std::move(w)))),
                                      static_cast<float>(1.0 / std::max(wsum, 1e-12)));
      total = l == 0 ? term : ad::add(total, term);
    }
    const double value = total.item();
    check_finite(value, "inverse", state.iteration);
    g.backward(total);
    step(params, config);

    LossRecord rec;
    rec.iteration = state.iteration;
    rec.phase = Phase::inverse;
    rec.inverse = value;
    rec.iters_per_sec = meter.tick();
    state.history.push(rec);
    ++state.iteration;
    if (callbacks.on_progress) callbacks.on_progress(rec);
    if (callbacks.on_snapshot && state.iteration % config.snapshot_interval == 0)
      callbacks.on_snapshot(model, state.iteration);
  }
  if (!state.cancelled) model.set_inverse_trained(true);
  if (callbacks.on_snapshot) callbacks.on_snapshot(model, state.iteration);
}

TrainState train(const VideoClip& clip, Model& model, const TrainConfig& config,
                 const TrainCallbacks& callbacks) {
  TrainState state = train_forward_phase(clip, model, config, callbacks);
  if (state.cancelled) return state;
  train_inverse_phase(clip, model, config, state, callbacks);
  return state;
}

double reconstruction_psnr(const Model& model, const VideoClip& clip) {
  std::vector<PixelCoord> all;
  all.reserve(clip.dims.pixel_count());
  for (int t = 0; t < clip.dims.frames; ++t)
    for (int y = 0; y < clip.dims.height; ++y)
      for (int x = 0; x < clip.dims.width; ++x) all.push_back({double(x), double(y), t});
  const auto pred = model.reconstruct(all);
  double se = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Rgb c = clip.color(static_cast<int>(all[i].x), static_cast<int>(all[i].y), all[i].t);
    for (int k = 0; k < 3; ++k) {
      const double e = static_cast<double>(pred[i][k]) - c[k];
      se += e * e;
    }
  }
  const double mse = se / (static_cast<double>(all.size()) * 3.0);
  return mse > 0 ? 10.0 * std::log10(1.0 / mse) : 1e9;
}

double round_trip_error(const Model& model, std::span<const PixelCoord> pixels) {
  if (pixels.empty()) return 0;
  const auto alpha = model.opacity(pixels);
  const auto fg = model.forward_map(pixels, Layer::foreground);
  const auto bg = model.forward_map(pixels, Layer::background);
  std::vector<AtlasCoord> uv(pixels.size());
  std::vector<int> t(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    uv[i] = alpha[i] > 0.5 ? fg[i] : bg[i];
    t[i] = pixels[i].t;
  }
  const auto back = model.inverse_map(uv, t);
  double total = 0;
  for (std::size_t i = 0; i < pixels.size(); ++i)
    total += std::hypot(back[i].x - pixels[i].x, back[i].y - pixels[i].y);
  return total / static_cast<double>(pixels.size());
}

}  // namespace inve
