#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lightvla/pruner.hpp"

namespace lightvla {

/// Decoder-only transformer shape plus the fixed costs pruning cannot touch.
struct ArchSpec {
  std::size_t layers = 32;
  std::size_t hidden = 4096;
  std::size_t ffn = 11008;
  std::size_t heads = 32;
  bool kv_equals_heads = true;  // false: grouped K/V with kv_heads heads
  std::size_t kv_heads = 32;
  bool gated_mlp = true;        // gate + up + down projections
  double encoder_flops = 0.0;
  double head_flops = 0.0;

  void validate() const;
};

/// LLaMA-2-7B decoder constants without overheads.
ArchSpec llama2_7b();

/// Per-forward FLOPs split by term; a multiply-accumulate counts as 2 FLOPs.
///   projections = 2 * n * d^2 * (2 + 2 * kv_heads / heads)   (Q, O + K, V)
///   attention   = 2 * (2 * n^2 * d)                           (QK^T and AV)
///   mlp         = 2 * (2 * n * d * ffn + n * ffn * d)         gated
///               = 2 * (n * d * ffn + n * ffn * d)             plain
/// each summed over layers.
struct DecoderFlops {
  double projections = 0.0;
  double attention = 0.0;
  double mlp = 0.0;
  double total() const { return projections + attention + mlp; }
};

DecoderFlops decoder_flops_breakdown(std::size_t n_tokens, const ArchSpec& arch);
/// Throws ArgumentError for n_tokens == 0.
double decoder_flops(std::size_t n_tokens, const ArchSpec& arch);

struct CostReport {
  double total_flops = 0.0;
  double decoder_flops = 0.0;
  double attention_quadratic_flops = 0.0;
  double reduction_vs_baseline = 0.0;
};

/// total = encoder + decoder(visual + text) + head; reduction is measured
/// against `baseline` when given.
CostReport pipeline_cost(std::size_t visual_tokens, std::size_t text_tokens, const ArchSpec& arch,
                         const CostReport* baseline = nullptr);

/// 1 - pruned.total / baseline.total.
double reduction(const CostReport& pruned, const CostReport& baseline);

/// Overhead calibration: the action head is an MLP of `head_layers` square
/// hidden x hidden layers over `action_tokens` tokens; the encoder absorbs the
/// rest so the baseline lands on `target_total` FLOPs.
struct OverheadCalibration {
  std::size_t visual_tokens = 512;
  std::size_t text_tokens = 30;
  double target_total = 8.8e12;
  std::size_t action_tokens = 56;
  std::size_t head_layers = 2;
};

ArchSpec calibrate_overheads(ArchSpec arch, const OverheadCalibration& cal);

/// Sample mean and population standard deviation of the retained counts.
/// Throws ArgumentError on empty input.
std::pair<double, double> retention_stats(const std::vector<SelectionResult>& selections);
std::pair<double, double> retention_stats(const std::vector<std::size_t>& counts);

struct BenchRow {
  std::string variant;
  std::size_t visual_tokens = 0;
  std::size_t text_tokens = 0;
  CostReport cost;
  double retained_mean = 0.0;
  double retained_std = 0.0;
};

inline constexpr const char* kBenchCsvHeader =
    "variant,visual_tokens,text_tokens,total_tflops,reduction,retained_mean,retained_std";

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Writes kBenchCsvHeader then one line per row. Throws IoError.
void emit_report(const std::vector<BenchRow>& rows, const std::filesystem::path& path);
std::vector<BenchRow> read_report(const std::filesystem::path& path);

/// Fixed-width table for terminals.
std::string format_table(const std::vector<BenchRow>& rows);

}  // namespace lightvla
