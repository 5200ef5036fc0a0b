// Experiment runner: train, eval, bench-flops, demo-prune.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lightvla/config.hpp"
#include "lightvla/errors.hpp"
#include "lightvla/metrics.hpp"
#include "lightvla/testbed.hpp"

namespace {

using namespace lightvla;

struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
  const std::vector<std::pair<std::string, std::string>> simple = {
      {"--seed", "seed"},   {"--variant", "variant"}, {"--noise-mode", "noise_mode"},
      {"--steps", "steps"}, {"--jobs", "jobs"},       {"--out", "out"},
      {"--episodes", "episodes"},
  };
  for (const auto& [flag, key] : simple) {
    cmd->add_option_function<std::string>(
        flag, [&o, key = key](const std::string& v) { o.flags.emplace_back(key, v); }, "sets `" + key + "`");
  }
}

void add_bench(CLI::App* cmd, Overrides& o) {
  const std::vector<std::pair<std::string, std::string>> bench = {
      {"--visual", "bench_visual"}, {"--visual-pruned", "bench_visual_pruned"},
      {"--text", "bench_text"},     {"--layers", "bench_layers"},
      {"--hidden", "bench_hidden"}, {"--ffn", "bench_ffn"},
      {"--overhead", "bench_overhead"},
  };
  for (const auto& [flag, key] : bench) {
    cmd->add_option_function<std::string>(
        flag, [&o, key = key](const std::string& v) { o.flags.emplace_back(key, v); }, "sets `" + key + "`");
  }
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) apply_config_file(cfg, o.config_path);
  for (const auto& [key, value] : o.flags) set_config_value(cfg, key, value);
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.train.eval_episodes = cfg.episodes;
  return cfg;
}

std::string out_path(const RunConfig& cfg, const char* fallback) { return cfg.out.empty() ? fallback : cfg.out; }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  return out;
}

void close_out(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw IoError(path, "write failed");
}

void write_recovery(std::ostream& out, const RecoveryMetrics& m) {
  out << "# recall=" << format_double(m.recall) << '\n'
      << "# retained_mean=" << format_double(m.retained_mean) << '\n'
      << "# retained_std=" << format_double(m.retained_std) << '\n'
      << "# accuracy=" << format_double(m.accuracy) << '\n'
      << "# episodes=" << m.episodes << '\n';
}

int run_train(const RunConfig& cfg) {
  const TrainResult result = train(cfg.train);
  const std::string path = out_path(cfg, "train_report.csv");
  std::ofstream csv = open_out(path);
  csv << "step,loss,retained_mean,retained_std,alpha\n";
  for (const TrainPoint& p : result.report.trace) {
    csv << p.step << ',' << format_double(p.loss) << ',' << format_double(p.retained_mean) << ','
        << format_double(p.retained_std) << ',' << format_double(p.alpha) << '\n';
  }
  close_out(csv, path);

  const std::string summary_path = path + ".summary";
  std::ofstream summary = open_out(summary_path);
  summary << echo_config(cfg);
  write_recovery(summary, result.report.recovery);
  close_out(summary, summary_path);

  const RecoveryMetrics& m = result.report.recovery;
  std::printf("trained %zu steps (%s); recall %.3f, retained %.1f+-%.1f of %zu, accuracy %.3f\n",
              cfg.train.steps, std::string(to_string(cfg.train.model.variant)).c_str(), m.recall,
              m.retained_mean, m.retained_std, cfg.train.data.visual_tokens, m.accuracy);
  std::printf("wrote %s and %s\n", path.c_str(), summary_path.c_str());
  return 0;
}

int run_eval(const RunConfig& cfg) {
  const TrainResult result = train(cfg.train);
  const Rng root(cfg.train.seed);
  Rng eval_rng = root.split(stream_tag("cli-eval"));
  const RecoveryMetrics m = evaluate_recovery(result.model, cfg.episodes, eval_rng, cfg.train.jobs);

  const std::string path = out_path(cfg, "eval_report.csv");
  std::ofstream csv = open_out(path);
  csv << "metric,value\n"
      << "recall," << format_double(m.recall) << '\n'
      << "retained_mean," << format_double(m.retained_mean) << '\n'
      << "retained_std," << format_double(m.retained_std) << '\n'
      << "accuracy," << format_double(m.accuracy) << '\n';
  std::printf("recall %.3f, retained %.1f+-%.1f, accuracy %.3f over %zu episodes\n", m.recall, m.retained_mean,
              m.retained_std, m.accuracy, cfg.episodes);

  if (cfg.train.model.variant != Variant::none) {
    Rng manip_rng = root.split(stream_tag("cli-manipulation"));
    const std::size_t extra = static_cast<std::size_t>(std::llround(m.retained_mean));
    const ManipulationReport r = manipulation_study(result.model, cfg.episodes, extra, 0.1, manip_rng);
    csv << "manipulation_base_accuracy," << format_double(r.base_accuracy) << '\n'
        << "manipulation_added_accuracy," << format_double(r.added_accuracy) << '\n'
        << "manipulation_added_delta_se," << format_double(r.added_delta_se) << '\n'
        << "manipulation_removed_accuracy," << format_double(r.removed_accuracy) << '\n'
        << "manipulation_removed_delta_se," << format_double(r.removed_delta_se) << '\n';
    std::printf("manipulation: base %.3f, +%zu tokens %.3f (se %.3f), -10%% tokens %.3f (se %.3f)\n",
                r.base_accuracy, extra, r.added_accuracy, r.added_delta_se, r.removed_accuracy,
                r.removed_delta_se);
  }
  close_out(csv, path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int run_bench_flops(const RunConfig& cfg) {
  const ArchSpec arch = bench_arch(cfg);
  const CostReport base = pipeline_cost(cfg.bench_visual, cfg.bench_text, arch);
  const CostReport pruned = pipeline_cost(cfg.bench_visual_pruned, cfg.bench_text, arch, &base);

  std::vector<BenchRow> rows(2);
  rows[0] = {"baseline", cfg.bench_visual, cfg.bench_text, base, static_cast<double>(cfg.bench_visual), 0.0};
  rows[1] = {"pruned", cfg.bench_visual_pruned, cfg.bench_text, pruned,
             static_cast<double>(cfg.bench_visual_pruned), 0.0};

  std::printf("decoder FLOPs per layer (MAC = 2 FLOPs):\n"
              "  projections 2*n*d^2*(2 + 2*kv_heads/heads)\n"
              "  attention   2*(2*n^2*d)\n"
              "  mlp         2*(2*n*d*ffn + n*ffn*d) (gated)\n");
  std::printf("arch: layers=%zu hidden=%zu ffn=%zu encoder_flops=%s head_flops=%s\n", arch.layers, arch.hidden,
              arch.ffn, format_double(arch.encoder_flops).c_str(), format_double(arch.head_flops).c_str());
  std::fputs(format_table(rows).c_str(), stdout);

  const std::string path = out_path(cfg, "bench_flops.csv");
  emit_report(rows, path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int run_demo_prune(const RunConfig& cfg) {
  const TrainResult result = train(cfg.train);
  const ToyModel& model = result.model;
  if (model.config().variant == Variant::none) {
    std::fprintf(stderr, "error: variant: demo-prune needs a pruning variant\n");
    return 2;
  }
  const ToyConfig& data = model.data_config();
  const ToyWorld world = make_world(data);
  Rng demo_rng = Rng(cfg.train.seed).split(stream_tag("demo"));

  const SyntheticSample sample = generate_sample(data, world, demo_rng);
  const ForwardOutput out = predict(model, sample);
  const SelectionResult& sel = *out.selection;

  std::string grid;
  const std::size_t width = 8;
  for (std::size_t i = 0; i < data.visual_tokens; ++i) {
    const bool kept = std::binary_search(sel.kept_indices.begin(), sel.kept_indices.end(), i);
    const bool planted = std::binary_search(sample.informative.begin(), sample.informative.end(), i);
    char c = kept ? '+' : '.';
    if (sample.visual.cls_index && *sample.visual.cls_index == i) c = 'C';
    else if (planted) c = kept ? '#' : 'x';
    grid += c;
    grid += (i + 1) % width == 0 ? '\n' : ' ';
  }
  if (data.visual_tokens % width != 0) grid += '\n';

  double recall_sum = 0.0;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const SyntheticSample s = generate_sample(data, world, demo_rng);
    const auto kept = predict(model, s).selection->kept_indices;
    std::size_t found = 0;
    for (std::size_t idx : s.informative)
      if (std::binary_search(kept.begin(), kept.end(), idx)) ++found;
    recall_sum += static_cast<double>(found) / static_cast<double>(s.informative.size());
  }
  const double mean_recall = cfg.episodes == 0 ? 0.0 : recall_sum / static_cast<double>(cfg.episodes);

  std::string report = "legend: C cls, # kept planted, x pruned planted, + kept, . pruned\n" + grid;
  report += "retained " + std::to_string(sel.kept_count()) + " of " + std::to_string(data.visual_tokens) + "\n";
  report += "mean_recall " + format_double(mean_recall) + " over " + std::to_string(cfg.episodes) + " episodes\n";
  std::fputs(report.c_str(), stdout);

  const std::string path = out_path(cfg, "demo_prune.txt");
  std::ofstream file = open_out(path);
  file << report;
  close_out(file, path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable visual-token pruning experiments"};
  app.require_subcommand(1);

  Overrides train_o, eval_o, bench_o, demo_o;
  auto* train_cmd = app.add_subcommand("train", "train on the toy task; writes a trace CSV and a summary");
  auto* eval_cmd = app.add_subcommand("eval", "train, then report recovery and token-manipulation metrics");
  auto* bench_cmd = app.add_subcommand("bench-flops", "FLOPs of the baseline vs the pruned token count");
  auto* demo_cmd = app.add_subcommand("demo-prune", "print the kept/pruned grid for one sample");
  add_common(train_cmd, train_o);
  add_common(eval_cmd, eval_o);
  add_common(bench_cmd, bench_o);
  add_bench(bench_cmd, bench_o);
  add_common(demo_cmd, demo_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(resolve(train_o));
    if (eval_cmd->parsed()) return run_eval(resolve(eval_o));
    if (bench_cmd->parsed()) return run_bench_flops(resolve(bench_o));
    if (demo_cmd->parsed()) return run_demo_prune(resolve(demo_o));
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: invalid config: %s\n", e.what());
    return 2;
  } catch (const TrainingError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
