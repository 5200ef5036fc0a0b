#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "lightvla/autodiff.hpp"
#include "lightvla/rng.hpp"
#include "lightvla/tokens.hpp"

namespace lightvla {

/// Query-to-token scores. Column c scores the visual token at sequence index
/// columns[c]; the [CLS] token never appears as a column.
struct ScoreMatrix {
  Var values;
  std::vector<std::size_t> columns;
  std::optional<std::size_t> cls_index;

  /// Columns map to sequence indices 0..cols-1; no CLS.
  static ScoreMatrix from_values(Var values);

  std::size_t query_count() const { return values.rows(); }
  void validate() const;
};

struct SelectionResult {
  /// Sorted, unique sequence indices of retained tokens, CLS included.
  std::vector<std::size_t> kept_indices;
  /// One row per query; forward value is exactly one-hot.
  Var indicator;
  /// Scores the argmax was taken over (noise included in train mode).
  Var ranked_scores;
  double noise_alpha_used = 0.0;
  /// Sequence index chosen by each query.
  std::vector<std::size_t> per_row_argmax;
  /// Column-to-sequence map copied from the scores.
  std::vector<std::size_t> columns;
  std::optional<std::size_t> cls_index;
  /// For each retained non-CLS token, in kept order, the query row that carries
  /// its straight-through gradient: the colliding row with the highest noisy
  /// score, lowest row on ties.
  std::vector<std::size_t> carrier_rows;

  std::size_t kept_count() const { return kept_indices.size(); }
};

enum class NoiseMode { linear_decay, constant, off };
enum class NoiseKind { uniform, gumbel };
enum class PruneMode { train, infer };

struct NoiseSchedule {
  double alpha_start = 1.0;
  double alpha_end = 0.0;
  std::size_t decay_steps = 0;
  NoiseMode mode = NoiseMode::linear_decay;
};

/// Noise upper bound at a training step.
double alpha_at(std::size_t step, const NoiseSchedule& schedule);

std::string_view to_string(NoiseMode mode);
std::string_view to_string(NoiseKind kind);
std::optional<NoiseMode> parse_noise_mode(std::string_view name);
std::optional<NoiseKind> parse_noise_kind(std::string_view name);

/// softmax(P H_l^T / sqrt(D)) over the patch tokens P of `visual`.
Var query_attention(const TokenBatch& visual, const TokenBatch& language);

/// Parameter-free queries: one per patch token, each a convex combination of
/// the language rows weighted by query_attention.
Var generate_queries(const TokenBatch& visual, const TokenBatch& language);

/// S = Q P^T / sqrt(D) against the patch tokens of `visual`.
ScoreMatrix score_tokens(const Var& queries, const TokenBatch& visual);

/// Training-time selection: S' = S + noise, hard one-hot forward, softmax(S')
/// backward. Throws ArgumentError for alpha < 0.
SelectionResult select_train(const ScoreMatrix& scores, double alpha, Rng& rng,
                             NoiseKind kind = NoiseKind::uniform);

/// Noise-free per-row argmax. Records nothing.
SelectionResult select_infer(const ScoreMatrix& scores);

/// Builds the retained batch from a selection: CLS plus every selected token
/// in original order with original position IDs. Retained patch embeddings are
/// routed through the indicator's carrier rows, so they carry straight-through
/// gradients when the indicator is tracked.
TokenBatch assemble(const TokenBatch& visual, const SelectionResult& selection);

/// Keeps exactly `kept` (sorted sequence indices, CLS is added if missing)
/// without any indicator routing. Used by manipulation studies.
TokenBatch keep_tokens(const TokenBatch& visual, std::vector<std::size_t> kept);

/// Full parameter-free pipeline: queries, scores, selection, assembly.
std::pair<TokenBatch, SelectionResult> prune(const TokenBatch& visual, const TokenBatch& language,
                                             PruneMode mode, double alpha, Rng& rng,
                                             NoiseKind kind = NoiseKind::uniform);

}  // namespace lightvla
