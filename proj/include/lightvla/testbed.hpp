#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lightvla/autodiff.hpp"
#include "lightvla/learnable.hpp"
#include "lightvla/pruner.hpp"
#include "lightvla/rng.hpp"
#include "lightvla/tokens.hpp"

namespace lightvla {

// ---------------------------------------------------------------------------
// Synthetic data
//
// Each sample draws `informative` distinct keys from a fixed codebook. Text
// token m carries key m; one randomly placed visual patch carries the same key
// plus a payload along a fixed direction scaled by that key's action value.
// Every other patch is i.i.d. Gaussian noise and the [CLS] slot (index 0) is
// all zeros. Action values have a random sign and a magnitude near 1, so the
// target depends on the informative patches and the text alone.
// ---------------------------------------------------------------------------

struct ToyConfig {
  std::size_t visual_tokens = 64;  // including CLS when with_cls
  std::size_t text_tokens = 8;
  std::size_t dim = 32;
  std::size_t informative = 8;
  std::size_t feature_dim = 32;
  std::size_t key_count = 16;
  double key_scale = 5.0;
  double noise_scale = 1.0;
  double payload_scale = 2.0;
  double magnitude_jitter = 0.5;  // action magnitudes uniform in 1 +- jitter
  bool with_cls = true;
  std::uint64_t world_seed = 0x5eed;  // codebook and payload direction

  void validate() const;
  std::size_t patch_count() const { return with_cls ? visual_tokens - 1 : visual_tokens; }
};

/// Fixed per-config constants shared by every sample.
struct ToyWorld {
  Matrix codebook;           // key_count x feature_dim, rows of norm key_scale
  Matrix payload_direction;  // 1 x feature_dim, unit norm
};

ToyWorld make_world(const ToyConfig& cfg);

struct SyntheticSample {
  TokenBatch visual;                     // raw features, L_v x feature_dim
  TokenBatch language;                   // raw features, L_l x feature_dim
  std::vector<std::size_t> informative;  // sorted sequence indices
  Matrix target;                         // 1 x informative, signed magnitudes near 1
};

/// Throws ArgumentError when the config cannot hold the planted tokens.
SyntheticSample generate_sample(const ToyConfig& cfg, const ToyWorld& world, Rng& rng);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

enum class Variant { none, parameter_free, vision_learnable, llm_learnable };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::parameter_free;
  std::size_t layers = 1;
  std::size_t hidden = 64;   // MLP width
  std::size_t queries = 16;  // learnable variants
  AttentionAggregation aggregation = AttentionAggregation::mean;
  NoiseKind noise_kind = NoiseKind::uniform;
};

struct Parameter {
  std::string name;
  Matrix value;
};

/// Shared linear token embedder for both modalities, a stack of single-head
/// attention + ReLU MLP residual blocks (the last block only updates text
/// positions), and a linear readout of one action component per text token.
class ToyModel {
 public:
  ToyModel(const ToyConfig& data, const ModelConfig& model, Rng& rng);

  const ToyConfig& data_config() const { return data_; }
  const ModelConfig& config() const { return model_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t index_of(std::string_view name) const;

 private:
  ToyConfig data_;
  ModelConfig model_;
  std::vector<Parameter> params_;
};

/// Parameter values as Vars, either as tape leaves or as constants.
struct BoundParameters {
  std::vector<Var> vars;
};

BoundParameters bind(const ToyModel& model, Tape* tape);

struct ForwardOutput {
  Var prediction;  // 1 x informative
  std::optional<SelectionResult> selection;
  std::size_t visual_tokens_consumed = 0;
};

struct ForwardOptions {
  PruneMode mode = PruneMode::infer;
  double alpha = 0.0;
  Rng* rng = nullptr;  // required in train mode
  /// Infer mode only: bypass the scorer and keep exactly these visual indices.
  std::optional<std::vector<std::size_t>> forced_kept;
};

ForwardOutput forward(const ToyModel& model, const BoundParameters& params,
                      const SyntheticSample& sample, const ForwardOptions& options);

/// Noise-free prediction with no recording.
ForwardOutput predict(const ToyModel& model, const SyntheticSample& sample);

/// Fraction of action components whose sign matches the target.
double sign_accuracy(const Matrix& prediction, const Matrix& target);

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct TrainConfig {
  ToyConfig data;
  ModelConfig model;
  NoiseSchedule noise;             // decay_steps == 0 means decay_fraction * steps
  double noise_decay_fraction = 0.75;
  std::size_t steps = 5000;
  std::size_t batch = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double lr_decay_fraction = 0.75;
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t eval_episodes = 500;

  NoiseSchedule resolved_noise() const;
};

struct TrainPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double retained_mean = 0.0;
  double retained_std = 0.0;
  double alpha = 0.0;
};

struct RecoveryMetrics {
  double recall = 0.0;
  double retained_mean = 0.0;
  double retained_std = 0.0;
  double accuracy = 0.0;
  std::size_t episodes = 0;
};

struct TrainReport {
  std::vector<TrainPoint> trace;
  RecoveryMetrics recovery;
  TrainConfig config;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ToyModel model;
  TrainReport report;
};

/// SGD with momentum; learning rate drops by lr_decay_factor at
/// lr_decay_fraction of the run. Throws TrainingError on a non-finite loss.
TrainResult train(const TrainConfig& cfg);

/// Infer-mode evaluation over fresh samples: informative recall, retained
/// count (mean, population std) and sign accuracy.
RecoveryMetrics evaluate_recovery(const ToyModel& model, std::size_t episodes, Rng& rng,
                                  std::size_t jobs = 1);

/// Paired comparison of the learned selection against (a) the selection plus
/// `extra_tokens` random pruned patches and (b) the selection minus
/// ceil(remove_fraction * kept) random retained patches.
struct ManipulationReport {
  std::size_t episodes = 0;
  double base_accuracy = 0.0;
  double added_accuracy = 0.0;
  double removed_accuracy = 0.0;
  double added_delta_se = 0.0;    // standard error of the paired difference
  double removed_delta_se = 0.0;
};

ManipulationReport manipulation_study(const ToyModel& model, std::size_t episodes,
                                      std::size_t extra_tokens, double remove_fraction, Rng& rng);

}  // namespace lightvla
