#include "lightvla/tokens.hpp"

#include <numeric>
#include <string>

#include "lightvla/errors.hpp"

namespace lightvla {

TokenBatch TokenBatch::sequential(Var embeddings, std::optional<std::size_t> cls_index) {
  TokenBatch batch;
  batch.position_ids.resize(embeddings.rows());
  std::iota(batch.position_ids.begin(), batch.position_ids.end(), std::size_t{0});
  batch.embeddings = std::move(embeddings);
  batch.cls_index = cls_index;
  batch.validate();
  return batch;
}

std::vector<std::size_t> TokenBatch::patch_indices() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i)
    if (!cls_index || *cls_index != i) out.push_back(i);
  return out;
}

Var TokenBatch::patches() const {
  if (!cls_index) return embeddings;
  return gather_rows(embeddings, patch_indices());
}

void TokenBatch::validate() const {
  if (embeddings.rows() != position_ids.size()) {
    throw ShapeError("TokenBatch: " + std::to_string(embeddings.rows()) + " embeddings but " +
                     std::to_string(position_ids.size()) + " position ids");
  }
  for (std::size_t i = 1; i < position_ids.size(); ++i) {
    if (position_ids[i] <= position_ids[i - 1])
      throw ContractError("TokenBatch: position ids must be strictly increasing");
  }
  if (cls_index && *cls_index >= size())
    throw ContractError("TokenBatch: cls index " + std::to_string(*cls_index) + " out of range");
}

}  // namespace lightvla
