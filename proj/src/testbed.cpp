#include "lightvla/testbed.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "lightvla/errors.hpp"

namespace lightvla {

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is handled
// exactly once; callers write results into per-index slots.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Matrix unit_row(Matrix m) {
  double norm = 0.0;
  for (double v : m.values()) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : m.values()) v /= norm;
  return m;
}

std::string layer_name(std::size_t layer, const char* what) {
  return "layer" + std::to_string(layer) + "." + what;
}

// Mean and population standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(xs.size()))};
}

double standard_error(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const auto [m, pop_std] = mean_std(xs);
  const double n = static_cast<double>(xs.size());
  const double sample_var = pop_std * pop_std * n / (n - 1.0);
  return std::sqrt(sample_var / n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

void ToyConfig::validate() const {
  if (dim == 0 || feature_dim == 0 || text_tokens == 0)
    throw ArgumentError("ToyConfig: dim, feature_dim and text_tokens must be >= 1");
  if (with_cls && visual_tokens < 2) throw ArgumentError("ToyConfig: need at least one patch besides CLS");
  if (informative == 0) throw ArgumentError("ToyConfig: informative must be >= 1");
  if (informative >= visual_tokens)
    throw ArgumentError("ToyConfig: informative (" + std::to_string(informative) +
                        ") must be below visual_tokens (" + std::to_string(visual_tokens) + ")");
  if (informative > patch_count()) throw ArgumentError("ToyConfig: more informative tokens than patches");
  if (informative > text_tokens)
    throw ArgumentError("ToyConfig: informative must not exceed text_tokens");
  if (key_count < informative) throw ArgumentError("ToyConfig: key_count must be >= informative");
  if (noise_scale < 0.0 || key_scale <= 0.0 || payload_scale <= 0.0)
    throw ArgumentError("ToyConfig: scales must be positive (noise_scale may be 0)");
  if (magnitude_jitter < 0.0 || magnitude_jitter >= 1.0)
    throw ArgumentError("ToyConfig: magnitude_jitter must be in [0, 1)");
}

ToyWorld make_world(const ToyConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.world_seed);
  ToyWorld world;
  world.codebook = Matrix(cfg.key_count, cfg.feature_dim);
  for (std::size_t k = 0; k < cfg.key_count; ++k) {
    const Matrix key = unit_row(sample_normal(1, cfg.feature_dim, 1.0, rng));
    for (std::size_t c = 0; c < cfg.feature_dim; ++c) world.codebook(k, c) = key(0, c) * cfg.key_scale;
  }
  world.payload_direction = unit_row(sample_normal(1, cfg.feature_dim, 1.0, rng));
  return world;
}

SyntheticSample generate_sample(const ToyConfig& cfg, const ToyWorld& world, Rng& rng) {
  cfg.validate();
  const std::size_t first_patch = cfg.with_cls ? 1 : 0;
  Matrix visual = sample_normal(cfg.visual_tokens, cfg.feature_dim, cfg.noise_scale, rng);
  if (cfg.with_cls) std::fill(visual.row(0).begin(), visual.row(0).end(), 0.0);
  Matrix language(cfg.text_tokens, cfg.feature_dim);

  const auto keys = rng.sample_without_replacement(cfg.key_count, cfg.informative);
  const auto slots = rng.sample_without_replacement(cfg.patch_count(), cfg.informative);

  SyntheticSample s;
  s.target = Matrix(1, cfg.informative);
  for (std::size_t m = 0; m < cfg.informative; ++m) {
    const double sign = rng.below(2) == 0 ? -1.0 : 1.0;
    const double action = sign * (1.0 + cfg.magnitude_jitter * (2.0 * rng.uniform() - 1.0));
    const std::size_t index = first_patch + slots[m];
    const auto key = world.codebook.row(keys[m]);
    for (std::size_t c = 0; c < cfg.feature_dim; ++c) {
      language(m, c) = key[c];
      visual(index, c) = key[c] + action * cfg.payload_scale * world.payload_direction(0, c);
    }
    s.target(0, m) = action;
    s.informative.push_back(index);
  }
  std::sort(s.informative.begin(), s.informative.end());

  s.visual = TokenBatch::sequential(Var(std::move(visual)),
                                    cfg.with_cls ? std::optional<std::size_t>(0) : std::nullopt);
  s.language = TokenBatch::sequential(Var(std::move(language)));
  return s;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::none: return "none";
    case Variant::parameter_free: return "parameter-free";
    case Variant::vision_learnable: return "vision-learnable";
    case Variant::llm_learnable: return "llm-learnable";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::none, Variant::parameter_free, Variant::vision_learnable, Variant::llm_learnable})
    if (to_string(v) == name) return v;
  return std::nullopt;
}

ToyModel::ToyModel(const ToyConfig& data, const ModelConfig& model, Rng& rng) : data_(data), model_(model) {
  data_.validate();
  if (model_.layers == 0) throw ArgumentError("ToyModel: layers must be >= 1");
  if (model_.variant == Variant::llm_learnable && model_.layers < 2)
    throw ArgumentError("ToyModel: llm-learnable prunes after layer 1 and needs layers >= 2");
  if ((model_.variant == Variant::vision_learnable || model_.variant == Variant::llm_learnable) &&
      (model_.queries == 0 || model_.queries > data_.visual_tokens))
    throw ArgumentError("ToyModel: learnable query count must be in [1, visual_tokens]");

  const double d = static_cast<double>(data_.dim);
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, double stddev) {
    params_.push_back({std::move(name), sample_normal(rows, cols, stddev, rng)});
  };
  add("embed", data_.feature_dim, data_.dim, 1.0 / std::sqrt(static_cast<double>(data_.feature_dim)));
  for (std::size_t l = 0; l < model_.layers; ++l) {
    add(layer_name(l, "wq"), data_.dim, data_.dim, 1.0 / std::sqrt(d));
    add(layer_name(l, "wk"), data_.dim, data_.dim, 1.0 / std::sqrt(d));
    add(layer_name(l, "wv"), data_.dim, data_.dim, 1.0 / std::sqrt(d));
    add(layer_name(l, "w1"), data_.dim, model_.hidden, 1.0 / std::sqrt(d));
    add(layer_name(l, "w2"), model_.hidden, data_.dim, 1.0 / std::sqrt(static_cast<double>(model_.hidden)));
  }
  add("readout", data_.dim, 1, 1.0 / std::sqrt(d));

  if (model_.variant == Variant::vision_learnable || model_.variant == Variant::llm_learnable) {
    const std::size_t bank_dim = model_.variant == Variant::vision_learnable ? data_.feature_dim : data_.dim;
    LearnableQueryBank bank = init_bank(model_.queries, bank_dim, rng);
    params_.push_back({"bank.queries", bank.queries.value()});
    params_.push_back({"bank.query_gain", bank.query_gain.value()});
    params_.push_back({"bank.token_gain", bank.token_gain.value()});
    if (model_.variant == Variant::llm_learnable) params_.push_back({"bank.zeta", bank.zeta.value()});
  }
}

std::size_t ToyModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw ArgumentError("ToyModel: no parameter named " + std::string(name));
}

BoundParameters bind(const ToyModel& model, Tape* tape) {
  BoundParameters out;
  out.vars.reserve(model.parameters().size());
  for (const Parameter& p : model.parameters())
    out.vars.push_back(tape != nullptr ? tape->leaf(p.value) : Var(p.value));
  return out;
}

namespace {

struct Block {
  Var wq, wk, wv, w1, w2;
};

Block block(const ToyModel& model, const BoundParameters& p, std::size_t layer) {
  return {p.vars[model.index_of(layer_name(layer, "wq"))], p.vars[model.index_of(layer_name(layer, "wk"))],
          p.vars[model.index_of(layer_name(layer, "wv"))], p.vars[model.index_of(layer_name(layer, "w1"))],
          p.vars[model.index_of(layer_name(layer, "w2"))]};
}

Var mlp_residual(const Block& b, const Var& x) {
  return add(x, matmul(relu(matmul(x, b.w1)), b.w2));
}

// Attention from `queries_from` over `context`; returns (updated rows, weights).
std::pair<Var, Var> attention_residual(const Block& b, const Var& queries_from, const Var& context) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries_from.cols()));
  const Var weights =
      softmax_rows(scale(matmul_transposed(matmul(queries_from, b.wq), matmul(context, b.wk)), inv_sqrt_d));
  return {add(queries_from, matmul(weights, matmul(context, b.wv))), weights};
}

LearnableQueryBank bound_bank(const ToyModel& model, const BoundParameters& p) {
  LearnableQueryBank bank;
  bank.queries = p.vars[model.index_of("bank.queries")];
  bank.query_gain = p.vars[model.index_of("bank.query_gain")];
  bank.token_gain = p.vars[model.index_of("bank.token_gain")];
  bank.zeta = model.config().variant == Variant::llm_learnable ? p.vars[model.index_of("bank.zeta")]
                                                               : Var(Matrix(1, 1, 1.0));
  return bank;
}

SelectionResult select(const ScoreMatrix& scores, const ForwardOptions& options, NoiseKind kind) {
  if (options.mode == PruneMode::infer) return select_infer(scores);
  if (options.rng == nullptr) throw ArgumentError("forward: train mode needs an Rng");
  return select_train(scores, options.alpha, *options.rng, kind);
}

// Linear projection followed by a fixed unit-gain RMS norm.
Var embed_tokens(const Var& features, const Var& embed) {
  return rms_normalize(matmul(features, embed), Var(Matrix(1, embed.cols(), 1.0)));
}

TokenBatch with_embeddings(const TokenBatch& like, Var embeddings) {
  TokenBatch out = like;
  out.embeddings = std::move(embeddings);
  return out;
}

}  // namespace

ForwardOutput forward(const ToyModel& model, const BoundParameters& p, const SyntheticSample& sample,
                      const ForwardOptions& options) {
  const ToyConfig& cfg = model.data_config();
  const ModelConfig& mc = model.config();
  if (sample.visual.dim() != cfg.feature_dim || sample.language.dim() != cfg.feature_dim)
    throw ShapeError("forward: sample feature dim does not match the model");
  if (sample.target.cols() != cfg.informative || sample.language.size() < cfg.informative)
    throw ShapeError("forward: sample target does not match the model");
  if (options.forced_kept && options.mode != PruneMode::infer)
    throw ArgumentError("forward: forced selections are only supported in infer mode");

  const Var& embed = p.vars[model.index_of("embed")];
  const Var text = embed_tokens(sample.language.embeddings, embed);

  ForwardOutput out;
  TokenBatch visual;
  std::size_t first_layer = 0;
  Var sequence;

  switch (mc.variant) {
    case Variant::none:
      visual = with_embeddings(sample.visual, embed_tokens(sample.visual.embeddings, embed));
      break;
    case Variant::parameter_free: {
      const TokenBatch embedded = with_embeddings(sample.visual, embed_tokens(sample.visual.embeddings, embed));
      if (options.forced_kept) {
        visual = keep_tokens(embedded, *options.forced_kept);
      } else {
        const TokenBatch language = TokenBatch::sequential(text);
        const ScoreMatrix scores = score_tokens(generate_queries(embedded, language), embedded);
        out.selection = select(scores, options, mc.noise_kind);
        visual = assemble(embedded, *out.selection);
      }
      break;
    }
    case Variant::vision_learnable: {
      TokenBatch raw;
      if (options.forced_kept) {
        raw = keep_tokens(sample.visual, *options.forced_kept);
      } else {
        out.selection = select(score_vision(bound_bank(model, p), sample.visual), options, mc.noise_kind);
        raw = assemble(sample.visual, *out.selection);
      }
      visual = with_embeddings(raw, embed_tokens(raw.embeddings, embed));
      break;
    }
    case Variant::llm_learnable: {
      // Layer 0 sees every token; pruning happens on its visual outputs.
      const Block b0 = block(model, p, 0);
      const Var tokens = concat_rows(embed_tokens(sample.visual.embeddings, embed), text);
      auto [mixed, weights] = attention_residual(b0, tokens, tokens);
      const Var hidden = mlp_residual(b0, mixed);
      const std::size_t nv = sample.visual.size();
      const TokenBatch hidden_visual = with_embeddings(sample.visual, slice_rows(hidden, 0, nv));
      const Var hidden_text = slice_rows(hidden, nv, sample.language.size());
      if (options.forced_kept) {
        visual = keep_tokens(hidden_visual, *options.forced_kept);
      } else {
        // Text-to-patch attention, renormalised over the patch columns.
        const std::size_t first_patch = cfg.with_cls ? 1 : 0;
        const Var text_to_patch = normalize_row_sums(
            slice_cols(slice_rows(weights, nv, sample.language.size()), first_patch, cfg.patch_count()));
        AttentionSummary attn = aggregate_attention({text_to_patch}, mc.aggregation);
        const LearnableQueryBank bank = bound_bank(model, p);
        attn.zeta = bank.zeta;
        out.selection = select(score_llm(bank, hidden_visual, attn), options, mc.noise_kind);
        visual = assemble(hidden_visual, *out.selection);
      }
      sequence = concat_rows(visual.embeddings, hidden_text);
      first_layer = 1;
      break;
    }
  }

  if (first_layer == 0) sequence = concat_rows(visual.embeddings, text);
  out.visual_tokens_consumed = visual.size();

  const std::size_t nv = visual.size();
  const std::size_t nl = sample.language.size();
  for (std::size_t l = first_layer; l < mc.layers; ++l) {
    const Block b = block(model, p, l);
    if (l + 1 < mc.layers) {
      sequence = mlp_residual(b, attention_residual(b, sequence, sequence).first);
    } else {
      const Var text_rows = slice_rows(sequence, nv, nl);
      sequence = mlp_residual(b, attention_residual(b, text_rows, sequence).first);
    }
  }
  // `sequence` now holds the text rows only.
  const Var action_rows = slice_rows(sequence, 0, cfg.informative);
  out.prediction = transpose(matmul(action_rows, p.vars[model.index_of("readout")]));
  return out;
}

ForwardOutput predict(const ToyModel& model, const SyntheticSample& sample) {
  return forward(model, bind(model, nullptr), sample, ForwardOptions{});
}

double sign_accuracy(const Matrix& prediction, const Matrix& target) {
  require_same_shape(prediction, target, "sign_accuracy");
  if (target.size() == 0) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < target.size(); ++i)
    if ((prediction.data()[i] > 0.0) == (target.data()[i] > 0.0)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(target.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

NoiseSchedule TrainConfig::resolved_noise() const {
  NoiseSchedule s = noise;
  if (s.decay_steps == 0) {
    s.decay_steps = static_cast<std::size_t>(std::llround(noise_decay_fraction * static_cast<double>(steps)));
  }
  return s;
}

TrainResult train(const TrainConfig& cfg) {
  if (cfg.batch == 0) throw ArgumentError("train: batch must be >= 1");
  const Rng root(cfg.seed);
  Rng init_rng = root.split(stream_tag("init"));
  Rng data_rng = root.split(stream_tag("train-data"));
  const Rng noise_root = root.split(stream_tag("selection-noise"));

  TrainResult result{ToyModel(cfg.data, cfg.model, init_rng), {}};
  ToyModel& model = result.model;
  result.report.config = cfg;
  result.report.seed = cfg.seed;

  const ToyWorld world = make_world(cfg.data);
  const NoiseSchedule schedule = cfg.resolved_noise();
  const auto lr_drop_step =
      static_cast<std::size_t>(std::llround(cfg.lr_decay_fraction * static_cast<double>(cfg.steps)));
  const std::size_t n_params = model.parameters().size();

  std::vector<Matrix> velocity;
  for (const Parameter& p : model.parameters()) velocity.emplace_back(p.value.rows(), p.value.cols());

  std::vector<SyntheticSample> batch(cfg.batch);
  std::vector<std::vector<Matrix>> grads(cfg.batch);
  std::vector<double> losses(cfg.batch);
  std::vector<double> kept(cfg.batch);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double alpha = alpha_at(step, schedule);
    const double lr = step < lr_drop_step ? cfg.learning_rate : cfg.learning_rate * cfg.lr_decay_factor;
    for (auto& s : batch) s = generate_sample(cfg.data, world, data_rng);
    const Rng step_noise = noise_root.split(step);

    try {
      parallel_for(cfg.batch, cfg.jobs, [&](std::size_t i) {
        Tape tape;
        const BoundParameters bound = bind(model, &tape);
        Rng noise = step_noise.split(i);
        ForwardOptions opts;
        opts.mode = PruneMode::train;
        opts.alpha = alpha;
        opts.rng = &noise;
        const ForwardOutput fwd = forward(model, bound, batch[i], opts);
        const Var loss = mean_squared_error(fwd.prediction, batch[i].target);
        tape.backward(loss);
        losses[i] = loss.value()(0, 0);
        kept[i] = static_cast<double>(fwd.visual_tokens_consumed);
        grads[i].clear();
        for (const Var& v : bound.vars) grads[i].push_back(tape.grad(v));
      });
    } catch (const NumericError& e) {
      throw TrainingError(step, e.what());
    }

    double loss_sum = 0.0;
    for (double l : losses) loss_sum += l;
    const double loss_mean = loss_sum / static_cast<double>(cfg.batch);
    if (!std::isfinite(loss_mean)) throw TrainingError(step, "loss is not finite");

    const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
    for (std::size_t k = 0; k < n_params; ++k) {
      Matrix g(velocity[k].rows(), velocity[k].cols());
      for (std::size_t i = 0; i < cfg.batch; ++i)
        for (std::size_t e = 0; e < g.size(); ++e) g.data()[e] += grads[i][k].data()[e];
      Matrix& v = velocity[k];
      Matrix& w = model.parameters()[k].value;
      for (std::size_t e = 0; e < g.size(); ++e) {
        v.data()[e] = cfg.momentum * v.data()[e] + g.data()[e] * inv_batch;
        w.data()[e] -= lr * v.data()[e];
      }
      if (!all_finite(w)) throw TrainingError(step, "parameter " + model.parameters()[k].name + " diverged");
    }

    const auto [kept_mean, kept_std] = mean_std(kept);
    result.report.trace.push_back({step, loss_mean, kept_mean, kept_std, alpha});
  }

  Rng eval_rng = root.split(stream_tag("eval"));
  result.report.recovery = evaluate_recovery(model, cfg.eval_episodes, eval_rng, cfg.jobs);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

RecoveryMetrics evaluate_recovery(const ToyModel& model, std::size_t episodes, Rng& rng, std::size_t jobs) {
  RecoveryMetrics m;
  m.episodes = episodes;
  if (episodes == 0) return m;
  const ToyWorld world = make_world(model.data_config());
  std::vector<SyntheticSample> samples;
  samples.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) samples.push_back(generate_sample(model.data_config(), world, rng));

  std::vector<double> recall(episodes), retained(episodes), accuracy(episodes);
  parallel_for(episodes, jobs, [&](std::size_t i) {
    const SyntheticSample& s = samples[i];
    const ForwardOutput out = predict(model, s);
    retained[i] = static_cast<double>(out.visual_tokens_consumed);
    accuracy[i] = sign_accuracy(out.prediction.value(), s.target);
    if (!out.selection) {
      recall[i] = 1.0;
      return;
    }
    const auto& kept = out.selection->kept_indices;
    std::size_t found = 0;
    for (std::size_t idx : s.informative)
      if (std::binary_search(kept.begin(), kept.end(), idx)) ++found;
    recall[i] = static_cast<double>(found) / static_cast<double>(s.informative.size());
  });

  m.recall = mean_std(recall).first;
  std::tie(m.retained_mean, m.retained_std) = mean_std(retained);
  m.accuracy = mean_std(accuracy).first;
  return m;
}

ManipulationReport manipulation_study(const ToyModel& model, std::size_t episodes, std::size_t extra_tokens,
                                      double remove_fraction, Rng& rng) {
  if (model.config().variant == Variant::none)
    throw ArgumentError("manipulation_study: model has no pruner");
  const ToyConfig& cfg = model.data_config();
  const ToyWorld world = make_world(cfg);
  ManipulationReport r;
  r.episodes = episodes;
  std::vector<double> base(episodes), added(episodes), removed(episodes);
  std::vector<double> add_delta(episodes), remove_delta(episodes);

  const BoundParameters params = bind(model, nullptr);
  for (std::size_t e = 0; e < episodes; ++e) {
    const SyntheticSample s = generate_sample(cfg, world, rng);
    const ForwardOutput learned = forward(model, params, s, ForwardOptions{});
    const auto& kept = learned.selection->kept_indices;
    base[e] = sign_accuracy(learned.prediction.value(), s.target);

    std::vector<std::size_t> pruned, retained_patches;
    for (std::size_t idx : s.visual.patch_indices()) {
      if (std::binary_search(kept.begin(), kept.end(), idx)) {
        retained_patches.push_back(idx);
      } else {
        pruned.push_back(idx);
      }
    }

    ForwardOptions opts;
    std::vector<std::size_t> grown = kept;
    for (std::size_t j : rng.sample_without_replacement(pruned.size(), std::min(extra_tokens, pruned.size())))
      grown.push_back(pruned[j]);
    opts.forced_kept = grown;
    added[e] = sign_accuracy(forward(model, params, s, opts).prediction.value(), s.target);

    const auto drop = std::min(
        retained_patches.size(),
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::ceil(remove_fraction * static_cast<double>(retained_patches.size())))));
    std::vector<bool> dropped(retained_patches.size(), false);
    for (std::size_t j : rng.sample_without_replacement(retained_patches.size(), drop)) dropped[j] = true;
    std::vector<std::size_t> shrunk;
    for (std::size_t j = 0; j < retained_patches.size(); ++j)
      if (!dropped[j]) shrunk.push_back(retained_patches[j]);
    opts.forced_kept = shrunk;
    removed[e] = sign_accuracy(forward(model, params, s, opts).prediction.value(), s.target);

    add_delta[e] = added[e] - base[e];
    remove_delta[e] = removed[e] - base[e];
  }
  r.base_accuracy = mean_std(base).first;
  r.added_accuracy = mean_std(added).first;
  r.removed_accuracy = mean_std(removed).first;
  r.added_delta_se = standard_error(add_delta);
  r.removed_delta_se = standard_error(remove_delta);
  return r;
}

}  // namespace lightvla
