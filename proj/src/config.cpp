#include "lightvla/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "lightvla/errors.hpp"

namespace lightvla {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

std::size_t to_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(std::string(key), "expected an unsigned 64-bit integer, got '" + std::string(v) + "'");
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(v) + "'");
}

#define COUNT_FIELD(name, member)                                                          \
  Field {                                                                                  \
    name, [](const RunConfig& c) { return std::to_string(c.member); },                     \
        [](RunConfig& c, std::string_view v) { c.member = to_count(name, v); }             \
  }
#define REAL_FIELD(name, member)                                                           \
  Field {                                                                                  \
    name, [](const RunConfig& c) { return format_double(c.member); },                      \
        [](RunConfig& c, std::string_view v) { c.member = to_real(name, v); }              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"variant", [](const RunConfig& c) { return std::string(to_string(c.train.model.variant)); },
       [](RunConfig& c, std::string_view v) {
         const auto parsed = parse_variant(v);
         if (!parsed)
           throw ConfigError("variant", "unknown variant '" + std::string(v) +
                                            "' (none, parameter-free, vision-learnable, llm-learnable)");
         c.train.model.variant = *parsed;
       }},
      {"noise_mode", [](const RunConfig& c) { return std::string(to_string(c.train.noise.mode)); },
       [](RunConfig& c, std::string_view v) {
         const auto parsed = parse_noise_mode(v);
         if (!parsed)
           throw ConfigError("noise_mode", "unknown mode '" + std::string(v) + "' (linear-decay, constant, off)");
         c.train.noise.mode = *parsed;
       }},
      {"noise_kind", [](const RunConfig& c) { return std::string(to_string(c.train.model.noise_kind)); },
       [](RunConfig& c, std::string_view v) {
         const auto parsed = parse_noise_kind(v);
         if (!parsed) throw ConfigError("noise_kind", "unknown kind '" + std::string(v) + "' (uniform, gumbel)");
         c.train.model.noise_kind = *parsed;
       }},
      REAL_FIELD("alpha_start", train.noise.alpha_start),
      REAL_FIELD("alpha_end", train.noise.alpha_end),
      COUNT_FIELD("noise_decay_steps", train.noise.decay_steps),
      REAL_FIELD("noise_decay_fraction", train.noise_decay_fraction),
      COUNT_FIELD("visual_tokens", train.data.visual_tokens),
      COUNT_FIELD("text_tokens", train.data.text_tokens),
      COUNT_FIELD("dim", train.data.dim),
      COUNT_FIELD("informative", train.data.informative),
      COUNT_FIELD("feature_dim", train.data.feature_dim),
      COUNT_FIELD("key_count", train.data.key_count),
      REAL_FIELD("key_scale", train.data.key_scale),
      REAL_FIELD("noise_scale", train.data.noise_scale),
      REAL_FIELD("payload_scale", train.data.payload_scale),
      REAL_FIELD("magnitude_jitter", train.data.magnitude_jitter),
      {"with_cls", [](const RunConfig& c) { return std::string(c.train.data.with_cls ? "true" : "false"); },
       [](RunConfig& c, std::string_view v) { c.train.data.with_cls = to_bool("with_cls", v); }},
      {"world_seed", [](const RunConfig& c) { return std::to_string(c.train.data.world_seed); },
       [](RunConfig& c, std::string_view v) { c.train.data.world_seed = to_u64("world_seed", v); }},
      COUNT_FIELD("layers", train.model.layers),
      COUNT_FIELD("hidden", train.model.hidden),
      COUNT_FIELD("queries", train.model.queries),
      {"aggregation",
       [](const RunConfig& c) {
         return std::string(c.train.model.aggregation == AttentionAggregation::mean ? "mean" : "max");
       },
       [](RunConfig& c, std::string_view v) {
         if (v == "mean") {
           c.train.model.aggregation = AttentionAggregation::mean;
         } else if (v == "max") {
           c.train.model.aggregation = AttentionAggregation::max;
         } else {
           throw ConfigError("aggregation", "expected mean or max, got '" + std::string(v) + "'");
         }
       }},
      COUNT_FIELD("steps", train.steps),
      COUNT_FIELD("batch", train.batch),
      REAL_FIELD("learning_rate", train.learning_rate),
      REAL_FIELD("momentum", train.momentum),
      REAL_FIELD("lr_decay_fraction", train.lr_decay_fraction),
      REAL_FIELD("lr_decay_factor", train.lr_decay_factor),
      {"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
       [](RunConfig& c, std::string_view v) { c.train.seed = to_u64("seed", v); }},
      COUNT_FIELD("jobs", train.jobs),
      COUNT_FIELD("eval_episodes", train.eval_episodes),
      COUNT_FIELD("episodes", episodes),
      {"out", [](const RunConfig& c) { return c.out; },
       [](RunConfig& c, std::string_view v) { c.out = std::string(v); }},
      COUNT_FIELD("bench_visual", bench_visual),
      COUNT_FIELD("bench_visual_pruned", bench_visual_pruned),
      COUNT_FIELD("bench_text", bench_text),
      COUNT_FIELD("bench_layers", bench_layers),
      COUNT_FIELD("bench_hidden", bench_hidden),
      COUNT_FIELD("bench_ffn", bench_ffn),
      {"bench_overhead",
       [](const RunConfig& c) { return c.bench_overhead ? format_double(*c.bench_overhead) : std::string("auto"); },
       [](RunConfig& c, std::string_view v) {
         if (v == "auto") {
           c.bench_overhead.reset();
         } else {
           c.bench_overhead = to_real("bench_overhead", v);
         }
       }},
  };
  return table;
}

#undef COUNT_FIELD
#undef REAL_FIELD

const Field& field(std::string_view key) {
  for (const Field& f : fields())
    if (f.key == key) return f;
  throw ConfigError(std::string(key), "unknown configuration key");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

RunConfig::RunConfig() = default;

bool operator==(const RunConfig& a, const RunConfig& b) { return echo_config(a) == echo_config(b); }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  field(key).set(cfg, trim(value));
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) { return field(key).get(cfg); }

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(std::string(line), "line " + std::to_string(line_no) + " is not key=value");
    set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  std::stringstream buffer;
  buffer << in.rdbuf();
  apply_config_text(cfg, buffer.str());
}

std::string echo_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

ArchSpec bench_arch(const RunConfig& cfg) {
  ArchSpec arch = llama2_7b();
  arch.layers = cfg.bench_layers;
  arch.hidden = cfg.bench_hidden;
  arch.ffn = cfg.bench_ffn;
  if (cfg.bench_overhead) {
    arch.encoder_flops = *cfg.bench_overhead;
    arch.head_flops = 0.0;
    return arch;
  }
  OverheadCalibration cal;
  cal.visual_tokens = cfg.bench_visual;
  cal.text_tokens = cfg.bench_text;
  return calibrate_overheads(arch, cal);
}

}  // namespace lightvla
