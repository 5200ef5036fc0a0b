#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "lightvla/autodiff.hpp"
#include "lightvla/pruner.hpp"
#include "lightvla/rng.hpp"
#include "lightvla/tokens.hpp"

namespace lightvla {

inline constexpr std::size_t kDefaultQueryCount = 128;

/// Learnable compression queries with RMS-norm gains for the query side and
/// the token side (not shared), plus the attention trade-off weight used by
/// the decoder-layer variant.
struct LearnableQueryBank {
  Var queries;      // n_q x dim
  Var query_gain;   // 1 x dim
  Var token_gain;   // 1 x dim
  Var zeta;         // 1 x 1

  std::size_t query_count() const { return queries.rows(); }
  std::size_t dim() const { return queries.cols(); }
};

/// Per-token attention mass from text to visual patches.
struct AttentionSummary {
  Var scores;  // 1 x L_v
  Var zeta;    // 1 x 1, starts at 1.0
};

enum class AttentionAggregation { mean, max };

/// Queries ~ N(0, 1/dim), gains = 1, zeta = 1. Throws ArgumentError on zero sizes.
LearnableQueryBank init_bank(std::size_t n_q, std::size_t dim, Rng& rng);
inline LearnableQueryBank init_bank(std::size_t dim, Rng& rng) {
  return init_bank(kDefaultQueryCount, dim, rng);
}

/// Registers every bank parameter as a leaf on `tape`.
LearnableQueryBank track(const LearnableQueryBank& bank, Tape& tape);

/// rms(Q) rms(P)^T / sqrt(dim) against the patch tokens of `visual`.
ScoreMatrix score_vision(const LearnableQueryBank& bank, const TokenBatch& visual);

/// (rms(Q) rms(P)^T + zeta * attn) / sqrt(dim); attn is broadcast to every row.
ScoreMatrix score_llm(const LearnableQueryBank& bank, const TokenBatch& visual,
                      const AttentionSummary& attn);

/// Collapses per-head text-to-visual attention (each head L_l x L_v, rows are
/// distributions) to one value per visual token: reduce over heads, then over
/// text positions. Throws ContractError for malformed rows.
AttentionSummary aggregate_attention(const std::vector<Var>& heads,
                                     AttentionAggregation how = AttentionAggregation::mean);

/// Binary layout: n_q and dim as little-endian u64, then row-major f64
/// queries, query gain, token gain, zeta.
void save_bank(const LearnableQueryBank& bank, const std::filesystem::path& path);
LearnableQueryBank load_bank(const std::filesystem::path& path);

std::vector<unsigned char> serialize_bank(const LearnableQueryBank& bank);
LearnableQueryBank deserialize_bank(const std::vector<unsigned char>& bytes);

}  // namespace lightvla
