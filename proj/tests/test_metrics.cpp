#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lightvla/errors.hpp"
#include "lightvla/metrics.hpp"
#include "lightvla/rng.hpp"

using namespace lightvla;

namespace {

ArchSpec tiny(std::size_t layers = 1, std::size_t hidden = 2, std::size_t ffn = 4, bool gated = true) {
  ArchSpec a;
  a.layers = layers;
  a.hidden = hidden;
  a.ffn = ffn;
  a.heads = 1;
  a.kv_heads = 1;
  a.gated_mlp = gated;
  return a;
}

// Hand expansion for one layer, d = 2, ffn = 4:
// projections 2*n*4*4 = 32n, attention 2*2*n^2*2 = 8n^2, mlp 2*(2*n*2*4 + n*4*2) = 48n.
double tiny_flops(double n) { return 80.0 * n + 8.0 * n * n; }

}  // namespace

TEST_CASE("decoder_flops hand values") {
  CHECK(decoder_flops(1, tiny()) == 88.0);
  CHECK(decoder_flops(1, tiny(1, 2, 4, false)) == 72.0);
  const DecoderFlops parts = decoder_flops_breakdown(1, tiny());
  CHECK(parts.projections == 32.0);
  CHECK(parts.attention == 8.0);
  CHECK(parts.mlp == 48.0);
  for (std::size_t n = 1; n < 50; ++n) CHECK(decoder_flops(n, tiny()) == tiny_flops(static_cast<double>(n)));
  CHECK_THROWS_AS(decoder_flops(0, tiny()), ArgumentError);
}

TEST_CASE("grouped K/V shrinks the projection term") {
  ArchSpec a = tiny(1, 8, 16);
  a.heads = 4;
  a.kv_heads = 1;
  a.kv_equals_heads = false;
  const DecoderFlops parts = decoder_flops_breakdown(3, a);
  CHECK(parts.projections == 2.0 * 3 * 64 * (2.0 + 2.0 * 0.25));
}

TEST_CASE("FLOPs are monotone in tokens, layers and hidden size") {
  const ArchSpec base = llama2_7b();
  for (std::size_t n = 1; n < 600; ++n) CHECK(decoder_flops(n + 1, base) > decoder_flops(n, base));
  for (std::size_t l = 1; l < 40; ++l) {
    ArchSpec a = base, b = base;
    a.layers = l;
    b.layers = l + 1;
    CHECK(decoder_flops(100, b) > decoder_flops(100, a));
  }
  for (std::size_t d = 64; d < 8192; d *= 2) {
    ArchSpec a = base, b = base;
    a.hidden = d;
    b.hidden = d + 1;
    CHECK(decoder_flops(100, b) > decoder_flops(100, a));
  }
}

TEST_CASE("doubling the hidden size quadruples the projection term") {
  ArchSpec a = llama2_7b(), b = llama2_7b();
  b.hidden = 2 * a.hidden;
  const double ratio = decoder_flops_breakdown(300, b).projections / decoder_flops_breakdown(300, a).projections;
  CHECK(ratio >= 3.9);
  CHECK(ratio <= 4.1);
}

TEST_CASE("differencing isolates the quadratic attention term") {
  const ArchSpec a = llama2_7b();
  for (std::size_t n : {1u, 7u, 78u, 542u, 1000u}) {
    const double quad = decoder_flops(2 * n, a) - 2.0 * decoder_flops(n, a);
    const double nn = static_cast<double>(n);
    CHECK(quad == 2.0 * (2.0 * nn * nn) * static_cast<double>(a.hidden) * static_cast<double>(a.layers) * 2.0);
  }
}

TEST_CASE("pipeline_cost examples") {
  const ArchSpec arch = calibrate_overheads(llama2_7b(), OverheadCalibration{});
  const CostReport base = pipeline_cost(512, 30, arch);
  CHECK(std::abs(base.total_flops - 8.8e12) < 1.0);
  const CostReport pruned = pipeline_cost(78, 30, arch, &base);
  CHECK(pruned.reduction_vs_baseline > 0.0);
  CHECK(pruned.reduction_vs_baseline >= 0.50);
  CHECK(pruned.reduction_vs_baseline <= 0.70);
  CHECK(pruned.total_flops == arch.encoder_flops + pruned.decoder_flops + arch.head_flops);
  CHECK(pipeline_cost(512, 30, arch, &base).reduction_vs_baseline == 0.0);

  const ArchSpec t = tiny();
  const CostReport tb = pipeline_cost(3, 1, t);
  const CostReport tp = pipeline_cost(1, 1, t, &tb);
  CHECK(tb.total_flops == tiny_flops(4));
  CHECK(tp.reduction_vs_baseline == doctest::Approx(1.0 - tiny_flops(2) / tiny_flops(4)).epsilon(1e-15));
  CHECK(pipeline_cost(0, 0, t).total_flops == 0.0);
}

TEST_CASE("reduction is invariant to a common scale") {
  const ArchSpec arch = calibrate_overheads(llama2_7b(), OverheadCalibration{});
  const CostReport base = pipeline_cost(512, 30, arch);
  const CostReport pruned = pipeline_cost(78, 30, arch, &base);
  for (double k : {0.5, 2.0, 1e3}) {
    CostReport sb = base, sp = pruned;
    sb.total_flops *= k;
    sp.total_flops *= k;
    CHECK(reduction(sp, sb) == doctest::Approx(pruned.reduction_vs_baseline).epsilon(1e-14));
  }
}

TEST_CASE("retention_stats examples") {
  CHECK(retention_stats(std::vector<std::size_t>{5, 5, 5}) == std::pair<double, double>{5.0, 0.0});
  CHECK(retention_stats(std::vector<std::size_t>{1, 3}) == std::pair<double, double>{2.0, 1.0});
  CHECK_THROWS_AS(retention_stats(std::vector<std::size_t>{}), ArgumentError);
  CHECK_THROWS_AS(retention_stats(std::vector<SelectionResult>{}), ArgumentError);

  Rng rng(71);
  std::vector<std::size_t> counts;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < 10000; ++i) {
    counts.push_back(1 + rng.below(64));
    const double x = static_cast<double>(counts.back());
    const double delta = x - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (x - mean);
  }
  const auto [m, s] = retention_stats(counts);
  CHECK(m == doctest::Approx(mean).epsilon(1e-12));
  CHECK(s == doctest::Approx(std::sqrt(m2 / 10000.0)).epsilon(1e-12));

  std::vector<SelectionResult> sels(2);
  sels[0].kept_indices = {0, 4};
  sels[1].kept_indices = {0, 1, 2, 9};
  CHECK(retention_stats(sels) == std::pair<double, double>{3.0, 1.0});
}

TEST_CASE("emit_report examples") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "lightvla_report_test.csv";

  emit_report({}, path);
  {
    std::ifstream in(path);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all == std::string(kBenchCsvHeader) + "\n");
  }
  CHECK(read_report(path).empty());

  const ArchSpec arch = calibrate_overheads(llama2_7b(), OverheadCalibration{});
  const CostReport base = pipeline_cost(512, 30, arch);
  const CostReport pruned = pipeline_cost(78, 30, arch, &base);
  const BenchRow row{"pruned", 78, 30, pruned, 78.0, 11.0};
  emit_report({row}, path);
  {
    std::ifstream in(path);
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 2);
  }
  const auto back = read_report(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].variant == "pruned");
  CHECK(back[0].visual_tokens == 78);
  CHECK(back[0].text_tokens == 30);
  CHECK(back[0].retained_mean == 78.0);
  CHECK(back[0].retained_std == 11.0);
  CHECK(back[0].cost.reduction_vs_baseline == pruned.reduction_vs_baseline);
  CHECK(back[0].cost.total_flops == doctest::Approx(pruned.total_flops).epsilon(1e-15));

  emit_report({BenchRow{"baseline", 512, 30, base, 512.0, 0.0}, row}, path);
  const auto pair = read_report(path);
  REQUIRE(pair.size() == 2);
  CHECK(pair[1].cost.reduction_vs_baseline == pruned.reduction_vs_baseline);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(emit_report({}, "/nonexistent/dir/report.csv"), IoError);
  try {
    emit_report({}, "/nonexistent/dir/report.csv");
  } catch (const IoError& e) {
    CHECK(e.path() == "/nonexistent/dir/report.csv");
  }
}

TEST_CASE("format_double round-trips") {
  Rng rng(72);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.below(80)) - 40);
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("invalid architectures are rejected") {
  ArchSpec a = tiny();
  a.layers = 0;
  CHECK_THROWS_AS(decoder_flops(1, a), ArgumentError);
  ArchSpec b = llama2_7b();
  b.kv_equals_heads = false;
  b.kv_heads = 0;
  CHECK_THROWS_AS(b.validate(), ArgumentError);
}
