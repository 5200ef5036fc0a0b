#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lightvla/metrics.hpp"
#include "lightvla/testbed.hpp"

namespace lightvla {

/// Everything a CLI run depends on. Serialized as flat `key=value` lines;
/// `#` starts a comment.
struct RunConfig {
  TrainConfig train;
  std::size_t episodes = 500;
  std::string out;

  // bench-flops
  std::size_t bench_visual = 512;
  std::size_t bench_visual_pruned = 78;
  std::size_t bench_text = 30;
  std::size_t bench_layers = 32;
  std::size_t bench_hidden = 4096;
  std::size_t bench_ffn = 11008;
  std::optional<double> bench_overhead;  // unset: calibrate to 8.8 TFLOPs at 512 tokens

  RunConfig();
};

bool operator==(const RunConfig& a, const RunConfig& b);

/// Bad key or value. `key()` names the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// All recognised keys, in echo order.
const std::vector<std::string>& config_keys();

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

/// Applies every `key=value` line of `text` on top of `cfg`.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// One `key=value` line per key; parses back to an equal RunConfig.
std::string echo_config(const RunConfig& cfg);

ArchSpec bench_arch(const RunConfig& cfg);

}  // namespace lightvla
