#pragma once

// Two-phase optimisation: forward mappers, opacity and atlas first, then the
// inverse mappers supervised by the frozen forward maps.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "inve/atlas_model.hpp"
#include "inve/media_io.hpp"

namespace inve {

struct LossWeights {
  double recon = 1.0;
  double rigid = 0.05;
  double flow = 0.5;
  double sparse = 0.01;
  double alpha_bootstrap = 0.1;

  // Throws ConfigError on a negative or non-finite weight.
  void validate() const;
};

struct EarlyStopConfig {
  bool enabled = false;
  int window = 500;
  int min_iters = 2000;
};

// Member defaults are the generic values; desk() and paper() are the tuned
// profiles and the starting points for JSON configs.
struct TrainConfig {
  std::string profile = "desk";
  int forward_iters = 3000;
  int inverse_iters = 1500;
  int batch = 2048;
  std::uint64_t seed = 1;
  int snapshot_interval = 50;
  int bootstrap_iters = -1;  // -1: first third of the forward phase, -2: all of it
  int sparsity_samples = 512;
  bool alpha_weighted_flow = true;
  double lr_hash = 1e-2;
  double lr_network = 1e-3;
  LossWeights weights;
  EarlyStopConfig early_stop;

  static TrainConfig desk();
  static TrainConfig paper();

  int effective_bootstrap_iters() const {
    if (bootstrap_iters == -2) return forward_iters;
    return bootstrap_iters >= 0 ? bootstrap_iters : forward_iters / 3;
  }
  void validate() const;
};

// JSON keys mirror the struct; absent keys keep their defaults.
TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& config);
TrainConfig load_train_config(const std::filesystem::path& path);

enum class Phase { forward, inverse };
std::string_view phase_name(Phase p);

struct LossRecord {
  std::uint64_t iteration = 0;
  Phase phase = Phase::forward;
  double recon = 0;
  double rigid = 0;
  double flow = 0;
  double sparse = 0;
  double alpha = 0;
  double inverse = 0;
  double iters_per_sec = 0;
};

// Fixed-capacity history of loss records; the oldest entries are dropped.
class LossHistory {
 public:
  explicit LossHistory(std::size_t capacity = 100000) : capacity_(capacity) {}
  void push(const LossRecord& r);
  std::size_t size() const { return records_.size(); }
  std::size_t capacity() const { return capacity_; }
  const LossRecord& operator[](std::size_t i) const { return records_[i]; }
  const LossRecord& back() const { return records_.back(); }
  bool empty() const { return records_.empty(); }
  // Columns: iteration,recon,rigid,flow,sparse,alpha,iters_per_sec,phase,inverse
  std::string to_csv() const;

 private:
  std::size_t capacity_;
  std::deque<LossRecord> records_;
};

struct TrainState {
  std::uint64_t iteration = 0;
  Phase phase = Phase::forward;
  LossHistory history;
  std::uint64_t seed = 0;
  bool stopped_early = false;
  bool cancelled = false;
};

struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_progress;
  // Called every snapshot_interval iterations and at the end of each phase.
  std::function<void(const Model&, std::uint64_t iteration)> on_snapshot;
  // Polled once per iteration; returning true ends the phase early.
  std::function<bool()> should_cancel;
};

// Uniform integer pixel positions over all W*H*N pixels.
std::vector<PixelCoord> sample_batch(const VideoDims& dims, std::size_t n, std::mt19937_64& rng);

// Weighted forward-phase objective on one batch. Terms whose weight is zero
// are not evaluated. The batch is reordered so that members with a usable
// flow target come first.
struct ForwardObjective {
  ad::Var<float> total;
  double recon = 0;
  double rigid = 0;
  double flow = 0;
  double sparse = 0;
  double alpha = 0;
  std::size_t flow_pairs = 0;
};
ForwardObjective forward_objective(ad::Graph<float>& g, const Model& model, const VideoClip& clip,
                                   std::vector<PixelCoord> batch, const TrainConfig& config,
                                   std::uint64_t iteration, std::mt19937_64& rng);

// Windowed consistency-loss plateau test on forward-phase history.
bool should_stop_early(const TrainState& state, const EarlyStopConfig& config);

// Throws TrainingDiverged naming the term when a loss becomes NaN or infinite.
TrainState train_forward_phase(const VideoClip& clip, Model& model, const TrainConfig& config,
                               const TrainCallbacks& callbacks = {});
// Continues state (phase must still be forward). Throws ContractViolation
// when the model's forward phase has not completed.
void train_inverse_phase(const VideoClip& clip, Model& model, const TrainConfig& config,
                         TrainState& state, const TrainCallbacks& callbacks = {});
TrainState train(const VideoClip& clip, Model& model, const TrainConfig& config,
                 const TrainCallbacks& callbacks = {});

// 10 log10(1 / MSE) of the model's reconstruction over every pixel of the clip.
double reconstruction_psnr(const Model& model, const VideoClip& clip);
// Mean |B(M(p), t) - p| in pixels; each pixel uses the layer its opacity favours.
double round_trip_error(const Model& model, std::span<const PixelCoord> pixels);

}  // namespace inve
