#include "lightvla/learnable.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "lightvla/errors.hpp"

namespace lightvla {

namespace {

void check_bank(const LearnableQueryBank& bank, const TokenBatch& visual, const char* op) {
  if (bank.dim() != visual.dim())
    throw ShapeError(std::string(op) + ": bank dim " + std::to_string(bank.dim()) +
                     " != token dim " + std::to_string(visual.dim()));
  if (bank.query_gain.rows() != 1 || bank.query_gain.cols() != bank.dim() ||
      bank.token_gain.rows() != 1 || bank.token_gain.cols() != bank.dim())
    throw ShapeError(std::string(op) + ": gain vectors must be 1 x dim");
}

// Unscaled rms(Q) rms(P)^T.
Var normalized_similarity(const LearnableQueryBank& bank, const TokenBatch& visual) {
  return matmul_transposed(rms_normalize(bank.queries, bank.query_gain),
                           rms_normalize(visual.patches(), bank.token_gain));
}

ScoreMatrix wrap(Var values, const TokenBatch& visual) {
  ScoreMatrix s;
  s.values = std::move(values);
  s.columns = visual.patch_indices();
  s.cls_index = visual.cls_index;
  return s;
}

Var elementwise_max(const Var& a, const Var& b) {
  return apply(
      {a, b},
      [](InputValues in) {
        require_same_shape(*in[0], *in[1], "elementwise_max");
        Matrix out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(out.data()[i], in[1]->data()[i]);
        return out;
      },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const bool first = in[0]->data()[i] >= in[1]->data()[i];
          Matrix* dst = first ? d[0] : d[1];
          if (dst) dst->data()[i] += g.data()[i];
        }
      });
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<unsigned char>& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ContractError("bank: truncated data");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

void put_matrix(std::vector<unsigned char>& out, const Matrix& m) {
  for (double v : m.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

Matrix get_matrix(const std::vector<unsigned char>& in, std::size_t& pos, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = std::bit_cast<double>(get_u64(in, pos));
  return m;
}

}  // namespace

LearnableQueryBank init_bank(std::size_t n_q, std::size_t dim, Rng& rng) {
  if (n_q == 0 || dim == 0) throw ArgumentError("init_bank: n_q and dim must be >= 1");
  LearnableQueryBank bank;
  bank.queries = Var(sample_normal(n_q, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng));
  bank.query_gain = Var(Matrix(1, dim, 1.0));
  bank.token_gain = Var(Matrix(1, dim, 1.0));
  bank.zeta = Var(Matrix(1, 1, 1.0));
  return bank;
}

LearnableQueryBank track(const LearnableQueryBank& bank, Tape& tape) {
  return {tape.leaf(bank.queries.value()), tape.leaf(bank.query_gain.value()),
          tape.leaf(bank.token_gain.value()), tape.leaf(bank.zeta.value())};
}

ScoreMatrix score_vision(const LearnableQueryBank& bank, const TokenBatch& visual) {
  check_bank(bank, visual, "score_vision");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(bank.dim()));
  return wrap(scale(normalized_similarity(bank, visual), inv_sqrt_d), visual);
}

ScoreMatrix score_llm(const LearnableQueryBank& bank, const TokenBatch& visual,
                      const AttentionSummary& attn) {
  check_bank(bank, visual, "score_llm");
  const std::size_t patches = visual.patch_indices().size();
  if (attn.scores.rows() != 1 || attn.scores.cols() != patches)
    throw ShapeError("score_llm: attention summary has " + attn.scores.value().shape_string() +
                     ", expected [1x" + std::to_string(patches) + "]");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(bank.dim()));
  const Var weighted = scale_by(attn.scores, attn.zeta);
  return wrap(scale(add_row_broadcast(normalized_similarity(bank, visual), weighted), inv_sqrt_d), visual);
}

AttentionSummary aggregate_attention(const std::vector<Var>& heads, AttentionAggregation how) {
  if (heads.empty()) throw ArgumentError("aggregate_attention: no heads");
  const Matrix& first = heads.front().value();
  constexpr double tol = 1e-9;
  for (const Var& h : heads) {
    const Matrix& m = h.value();
    if (!m.same_shape(first)) throw ShapeError("aggregate_attention: heads differ in shape");
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double total = 0.0;
      for (double v : m.row(r)) {
        if (v < 0.0) throw ContractError("aggregate_attention: negative attention weight");
        total += v;
      }
      if (std::abs(total - 1.0) > tol)
        throw ContractError("aggregate_attention: attention row sums to " + std::to_string(total));
    }
  }

  Var reduced = heads.front();
  for (std::size_t h = 1; h < heads.size(); ++h)
    reduced = how == AttentionAggregation::mean ? add(reduced, heads[h]) : elementwise_max(reduced, heads[h]);
  if (how == AttentionAggregation::mean) reduced = scale(reduced, 1.0 / static_cast<double>(heads.size()));
  return {mean_rows(reduced), Var(Matrix(1, 1, 1.0))};
}

std::vector<unsigned char> serialize_bank(const LearnableQueryBank& bank) {
  std::vector<unsigned char> out;
  put_u64(out, bank.query_count());
  put_u64(out, bank.dim());
  put_matrix(out, bank.queries.value());
  put_matrix(out, bank.query_gain.value());
  put_matrix(out, bank.token_gain.value());
  put_matrix(out, bank.zeta.value());
  return out;
}

LearnableQueryBank deserialize_bank(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  const std::uint64_t n_q = get_u64(bytes, pos);
  const std::uint64_t dim = get_u64(bytes, pos);
  if (n_q == 0 || dim == 0) throw ContractError("bank: zero size in header");
  const std::uint64_t expected = 16 + 8 * (n_q * dim + 2 * dim + 1);
  if (bytes.size() != expected)
    throw ContractError("bank: expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(bytes.size()));
  LearnableQueryBank bank;
  bank.queries = Var(get_matrix(bytes, pos, n_q, dim));
  bank.query_gain = Var(get_matrix(bytes, pos, 1, dim));
  bank.token_gain = Var(get_matrix(bytes, pos, 1, dim));
  bank.zeta = Var(get_matrix(bytes, pos, 1, 1));
  return bank;
}

void save_bank(const LearnableQueryBank& bank, const std::filesystem::path& path) {
  const auto bytes = serialize_bank(bank);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

LearnableQueryBank load_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bank(bytes);
}

}  // namespace lightvla
