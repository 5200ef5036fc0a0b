#include "lightvla/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lightvla/errors.hpp"

namespace lightvla {

void ArchSpec::validate() const {
  if (layers == 0 || hidden == 0 || ffn == 0 || heads == 0)
    throw ArgumentError("ArchSpec: layers, hidden, ffn and heads must be positive");
  if (!kv_equals_heads && (kv_heads == 0 || kv_heads > heads))
    throw ArgumentError("ArchSpec: kv_heads must be in [1, heads]");
  if (encoder_flops < 0.0 || head_flops < 0.0) throw ArgumentError("ArchSpec: overheads must be >= 0");
}

ArchSpec llama2_7b() {
  ArchSpec a;
  a.layers = 32;
  a.hidden = 4096;
  a.ffn = 11008;
  a.heads = 32;
  a.kv_heads = 32;
  a.kv_equals_heads = true;
  a.gated_mlp = true;
  return a;
}

DecoderFlops decoder_flops_breakdown(std::size_t n_tokens, const ArchSpec& arch) {
  arch.validate();
  const double n = static_cast<double>(n_tokens);
  const double d = static_cast<double>(arch.hidden);
  const double f = static_cast<double>(arch.ffn);
  const double layers = static_cast<double>(arch.layers);
  const double kv_share =
      arch.kv_equals_heads ? 1.0 : static_cast<double>(arch.kv_heads) / static_cast<double>(arch.heads);

  DecoderFlops out;
  out.projections = layers * 2.0 * n * d * d * (2.0 + 2.0 * kv_share);
  out.attention = layers * 2.0 * (2.0 * n * n * d);
  out.mlp = layers * 2.0 * ((arch.gated_mlp ? 2.0 : 1.0) * n * d * f + n * f * d);
  return out;
}

double decoder_flops(std::size_t n_tokens, const ArchSpec& arch) {
  if (n_tokens == 0) throw ArgumentError("decoder_flops: n_tokens must be >= 1");
  return decoder_flops_breakdown(n_tokens, arch).total();
}

double reduction(const CostReport& pruned, const CostReport& baseline) {
  if (baseline.total_flops <= 0.0) return 0.0;
  return 1.0 - pruned.total_flops / baseline.total_flops;
}

CostReport pipeline_cost(std::size_t visual_tokens, std::size_t text_tokens, const ArchSpec& arch,
                         const CostReport* baseline) {
  arch.validate();
  const std::size_t n = visual_tokens + text_tokens;
  CostReport r;
  if (n > 0) {
    const DecoderFlops parts = decoder_flops_breakdown(n, arch);
    r.decoder_flops = parts.total();
    r.attention_quadratic_flops = parts.attention;
  }
  r.total_flops = arch.encoder_flops + r.decoder_flops + arch.head_flops;
  if (baseline != nullptr) r.reduction_vs_baseline = reduction(r, *baseline);
  return r;
}

ArchSpec calibrate_overheads(ArchSpec arch, const OverheadCalibration& cal) {
  arch.encoder_flops = 0.0;
  arch.head_flops = 0.0;
  const double d = static_cast<double>(arch.hidden);
  arch.head_flops = 2.0 * static_cast<double>(cal.action_tokens) * d * d * static_cast<double>(cal.head_layers);
  const double decoder = decoder_flops(cal.visual_tokens + cal.text_tokens, arch);
  const double remainder = cal.target_total - decoder - arch.head_flops;
  if (remainder <= 0.0)
    throw ArgumentError("calibrate_overheads: decoder alone exceeds the target total");
  arch.encoder_flops = remainder;
  return arch;
}

std::pair<double, double> retention_stats(const std::vector<std::size_t>& counts) {
  if (counts.empty()) throw ArgumentError("retention_stats: no selections");
  double mean = 0.0;
  for (std::size_t c : counts) mean += static_cast<double>(c);
  mean /= static_cast<double>(counts.size());
  double var = 0.0;
  for (std::size_t c : counts) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  return {mean, std::sqrt(var / static_cast<double>(counts.size()))};
}

std::pair<double, double> retention_stats(const std::vector<SelectionResult>& selections) {
  std::vector<std::size_t> counts;
  counts.reserve(selections.size());
  for (const auto& s : selections) counts.push_back(s.kept_count());
  return retention_stats(counts);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& field, const std::string& path) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw IoError(path, "malformed number '" + field + "'");
  return v;
}

}  // namespace

void emit_report(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << kBenchCsvHeader << '\n';
  for (const BenchRow& r : rows) {
    out << r.variant << ',' << r.visual_tokens << ',' << r.text_tokens << ','
        << format_double(r.cost.total_flops / 1e12) << ',' << format_double(r.cost.reduction_vs_baseline) << ','
        << format_double(r.retained_mean) << ',' << format_double(r.retained_std) << '\n';
  }
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<BenchRow> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line != kBenchCsvHeader) throw IoError(path.string(), "unexpected header");
  std::vector<BenchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 7) throw IoError(path.string(), "expected 7 fields, got " + std::to_string(f.size()));
    BenchRow r;
    r.variant = f[0];
    r.visual_tokens = static_cast<std::size_t>(parse_double(f[1], path.string()));
    r.text_tokens = static_cast<std::size_t>(parse_double(f[2], path.string()));
    r.cost.total_flops = parse_double(f[3], path.string()) * 1e12;
    r.cost.reduction_vs_baseline = parse_double(f[4], path.string());
    r.retained_mean = parse_double(f[5], path.string());
    r.retained_std = parse_double(f[6], path.string());
    rows.push_back(r);
  }
  return rows;
}

std::string format_table(const std::vector<BenchRow>& rows) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %8s %6s %12s %10s %14s\n", "variant", "visual", "text", "TFLOPs",
                "reduction", "retained");
  out += line;
  for (const BenchRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-16s %8zu %6zu %12.3f %9.1f%% %7.1f+-%-5.1f\n", r.variant.c_str(),
                  r.visual_tokens, r.text_tokens, r.cost.total_flops / 1e12, 100.0 * r.cost.reduction_vs_baseline,
                  r.retained_mean, r.retained_std);
    out += line;
  }
  return out;
}

}  // namespace lightvla
