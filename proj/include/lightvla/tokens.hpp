#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "lightvla/autodiff.hpp"

namespace lightvla {

/// A token sequence: one embedding row per token, each with its original
/// position ID, and optionally a [CLS] token that is never pruned.
struct TokenBatch {
  Var embeddings;
  std::vector<std::size_t> position_ids;
  std::optional<std::size_t> cls_index;

  /// Position IDs 0..rows-1.
  static TokenBatch sequential(Var embeddings, std::optional<std::size_t> cls_index = std::nullopt);

  std::size_t size() const { return position_ids.size(); }
  std::size_t dim() const { return embeddings.cols(); }

  /// Sequence indices of every non-CLS token, in order.
  std::vector<std::size_t> patch_indices() const;
  /// Embedding rows of the non-CLS tokens, in order.
  Var patches() const;

  /// Throws ShapeError / ContractError when the batch invariants do not hold.
  void validate() const;
};

}  // namespace lightvla
