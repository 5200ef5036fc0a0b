#include "lightvla/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lightvla/errors.hpp"

namespace lightvla {

ScoreMatrix ScoreMatrix::from_values(Var values) {
  ScoreMatrix s;
  s.columns.resize(values.cols());
  for (std::size_t c = 0; c < s.columns.size(); ++c) s.columns[c] = c;
  s.values = std::move(values);
  return s;
}

void ScoreMatrix::validate() const {
  if (values.cols() != columns.size())
    throw ShapeError("ScoreMatrix: " + std::to_string(values.cols()) + " columns but " +
                     std::to_string(columns.size()) + " column indices");
  if (values.cols() == 0 && values.rows() > 0)
    throw ShapeError("ScoreMatrix: no columns to select from");
  require_finite(values.value(), "ScoreMatrix");
}

double alpha_at(std::size_t step, const NoiseSchedule& schedule) {
  switch (schedule.mode) {
    case NoiseMode::off:
      return 0.0;
    case NoiseMode::constant:
      return schedule.alpha_start;
    case NoiseMode::linear_decay:
      break;
  }
  if (step >= schedule.decay_steps) return schedule.alpha_end;
  const double t = static_cast<double>(step) / static_cast<double>(schedule.decay_steps);
  return schedule.alpha_start + (schedule.alpha_end - schedule.alpha_start) * t;
}

std::string_view to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::linear_decay: return "linear-decay";
    case NoiseMode::constant: return "constant";
    case NoiseMode::off: return "off";
  }
  return "?";
}

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::uniform ? "uniform" : "gumbel";
}

std::optional<NoiseMode> parse_noise_mode(std::string_view name) {
  if (name == "linear-decay") return NoiseMode::linear_decay;
  if (name == "constant") return NoiseMode::constant;
  if (name == "off") return NoiseMode::off;
  return std::nullopt;
}

std::optional<NoiseKind> parse_noise_kind(std::string_view name) {
  if (name == "uniform") return NoiseKind::uniform;
  if (name == "gumbel") return NoiseKind::gumbel;
  return std::nullopt;
}

namespace {

// Fills kept_indices and carrier_rows from per-row winners (column indices).
void finish_selection(SelectionResult& out, const Matrix& ranked, const std::vector<std::size_t>& winners) {
  const std::size_t cols = out.columns.size();
  // carrier[c] = row carrying column c, or npos.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> carrier(cols, npos);
  for (std::size_t r = 0; r < winners.size(); ++r) {
    const std::size_t c = winners[r];
    if (carrier[c] == npos || ranked(r, c) > ranked(carrier[c], c)) carrier[c] = r;
  }

  out.per_row_argmax.resize(winners.size());
  for (std::size_t r = 0; r < winners.size(); ++r) out.per_row_argmax[r] = out.columns[winners[r]];

  std::vector<std::pair<std::size_t, std::size_t>> kept;  // (sequence index, carrier row)
  for (std::size_t c = 0; c < cols; ++c)
    if (carrier[c] != npos) kept.emplace_back(out.columns[c], carrier[c]);
  std::sort(kept.begin(), kept.end());

  out.kept_indices.clear();
  out.carrier_rows.clear();
  bool cls_added = !out.cls_index.has_value();
  for (const auto& [index, row] : kept) {
    if (!cls_added && *out.cls_index < index) {
      out.kept_indices.push_back(*out.cls_index);
      cls_added = true;
    }
    out.kept_indices.push_back(index);
    out.carrier_rows.push_back(row);
  }
  if (!cls_added) out.kept_indices.push_back(*out.cls_index);
}

}  // namespace

Var query_attention(const TokenBatch& visual, const TokenBatch& language) {
  if (language.size() == 0) throw ArgumentError("generate_queries: language sequence is empty");
  if (visual.dim() != language.dim())
    throw ShapeError("generate_queries: visual dim " + std::to_string(visual.dim()) +
                     " != language dim " + std::to_string(language.dim()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(visual.dim()));
  return softmax_rows(scale(matmul_transposed(visual.patches(), language.embeddings), inv_sqrt_d));
}

Var generate_queries(const TokenBatch& visual, const TokenBatch& language) {
  return matmul(query_attention(visual, language), language.embeddings);
}

ScoreMatrix score_tokens(const Var& queries, const TokenBatch& visual) {
  if (queries.cols() != visual.dim())
    throw ShapeError("score_tokens: query dim " + std::to_string(queries.cols()) +
                     " != token dim " + std::to_string(visual.dim()));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(visual.dim()));
  ScoreMatrix s;
  s.values = scale(matmul_transposed(queries, visual.patches()), inv_sqrt_d);
  s.columns = visual.patch_indices();
  s.cls_index = visual.cls_index;
  return s;
}

SelectionResult select_train(const ScoreMatrix& scores, double alpha, Rng& rng, NoiseKind kind) {
  if (!(alpha >= 0.0)) throw ArgumentError("select_train: alpha must be >= 0");
  scores.validate();
  const Matrix noise = kind == NoiseKind::uniform
                           ? sample_uniform_noise(scores.values.rows(), scores.values.cols(), alpha, rng)
                           : sample_gumbel_noise(scores.values.rows(), scores.values.cols(), alpha, rng);
  const Var noisy = add(scores.values, Var(noise));

  SelectionResult out;
  out.indicator = straight_through_one_hot(noisy);
  out.ranked_scores = noisy;
  out.noise_alpha_used = alpha;
  out.columns = scores.columns;
  out.cls_index = scores.cls_index;
  finish_selection(out, noisy.value(), argmax_rows(noisy.value()));
  return out;
}

SelectionResult select_infer(const ScoreMatrix& scores) {
  scores.validate();
  const Matrix& s = scores.values.value();
  const auto winners = argmax_rows(s);
  Matrix hard(s.rows(), s.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) hard(r, winners[r]) = 1.0;

  SelectionResult out;
  out.indicator = Var(std::move(hard));
  out.ranked_scores = Var(s);
  out.columns = scores.columns;
  out.cls_index = scores.cls_index;
  finish_selection(out, s, winners);
  return out;
}

TokenBatch assemble(const TokenBatch& visual, const SelectionResult& selection) {
  visual.validate();
  if (selection.columns != visual.patch_indices() || selection.cls_index != visual.cls_index)
    throw ShapeError("assemble: selection was not computed against this token batch");

  // Retained patch rows in kept order: carrier indicator rows times patch embeddings.
  const Var routed = matmul(gather_rows(selection.indicator, selection.carrier_rows),
                            visual.patches());
  const std::size_t n = visual.size();
  std::vector<std::size_t> picks;
  picks.reserve(selection.kept_indices.size());
  std::size_t next_routed = 0;
  for (std::size_t index : selection.kept_indices) {
    if (visual.cls_index && index == *visual.cls_index) {
      picks.push_back(index);
    } else {
      picks.push_back(n + next_routed++);
    }
  }

  TokenBatch out;
  out.embeddings = gather_rows(concat_rows(visual.embeddings, routed), std::move(picks));
  out.cls_index = std::nullopt;
  for (std::size_t i = 0; i < selection.kept_indices.size(); ++i) {
    const std::size_t index = selection.kept_indices[i];
    out.position_ids.push_back(visual.position_ids[index]);
    if (visual.cls_index && index == *visual.cls_index) out.cls_index = i;
  }
  return out;
}

TokenBatch keep_tokens(const TokenBatch& visual, std::vector<std::size_t> kept) {
  visual.validate();
  if (visual.cls_index) kept.push_back(*visual.cls_index);
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  if (!kept.empty() && kept.back() >= visual.size())
    throw ShapeError("keep_tokens: index out of range");

  TokenBatch out;
  out.embeddings = gather_rows(visual.embeddings, kept);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    out.position_ids.push_back(visual.position_ids[kept[i]]);
    if (visual.cls_index && kept[i] == *visual.cls_index) out.cls_index = i;
  }
  return out;
}

std::pair<TokenBatch, SelectionResult> prune(const TokenBatch& visual, const TokenBatch& language,
                                             PruneMode mode, double alpha, Rng& rng, NoiseKind kind) {
  visual.validate();
  language.validate();
  const ScoreMatrix scores = score_tokens(generate_queries(visual, language), visual);
  SelectionResult selection =
      mode == PruneMode::train ? select_train(scores, alpha, rng, kind) : select_infer(scores);
  TokenBatch kept = assemble(visual, selection);
  return {std::move(kept), std::move(selection)};
}

}  // namespace lightvla
