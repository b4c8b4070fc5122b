#include "agb/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace agb {

using nlohmann::json;

void DataConfig::validate() const {
  if (count < 1) throw ConfigError("count must be >= 1");
  if (height < 16 || width < 16) throw ConfigError("height and width must be >= 16");
  if (n_coils < 1) throw ConfigError("n_coils must be >= 1");
  if (n_ellipses < 1) throw ConfigError("n_ellipses must be >= 1");
  if (!(acceleration > 1.0)) throw ConfigError("acceleration must be greater than 1");
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(width) / acceleration));
  if (center_lines > budget)
    throw ConfigError("center_lines " + std::to_string(center_lines) + " exceeds the line budget " +
                      std::to_string(budget));
}

void ExperimentConfig::resolve() {
  train.generator.height = data.height;
  train.generator.width = data.width;
  train.generator.n_coils = data.n_coils;
  train.critic.height = data.height;
  train.critic.width = data.width;
}

void ExperimentConfig::validate() const {
  data.validate();
  train.validate();
}

namespace {

struct Field {
  std::string key;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

template <typename V>
V as(const json& j, const std::string& key) {
  try {
    if constexpr (std::is_same_v<V, std::size_t> || std::is_same_v<V, std::uint64_t>) {
      if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
        throw ConfigError(key + ": expected a non-negative integer");
    } else if constexpr (std::is_same_v<V, double>) {
      if (!j.is_number()) throw ConfigError(key + ": expected a number");
    } else if constexpr (std::is_same_v<V, bool>) {
      if (!j.is_boolean()) throw ConfigError(key + ": expected true or false");
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!j.is_string()) throw ConfigError(key + ": expected a string");
    }
    return j.get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

#define AGB_FIELD(name, member, type)                                           \
  Field {                                                                       \
    name, [](const ExperimentConfig& c) { return json(c.member); },             \
        [](ExperimentConfig& c, const json& j) { c.member = as<type>(j, name); } \
  }

std::string embedder_name(EmbedderKind k) { return k == EmbedderKind::projection ? "projection" : "downsample"; }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"version", [](const ExperimentConfig&) { return json(kConfigVersion); },
       [](ExperimentConfig&, const json& j) {
         if (as<std::size_t>(j, "version") != static_cast<std::size_t>(kConfigVersion))
           throw ConfigError("unsupported config version " + j.dump());
       }},
      AGB_FIELD("count", data.count, std::size_t),
      AGB_FIELD("height", data.height, std::size_t),
      AGB_FIELD("width", data.width, std::size_t),
      AGB_FIELD("n_coils", data.n_coils, std::size_t),
      AGB_FIELD("acceleration", data.acceleration, double),
      AGB_FIELD("center_lines", data.center_lines, std::size_t),
      AGB_FIELD("n_ellipses", data.n_ellipses, std::size_t),
      AGB_FIELD("data_seed", data.seed, std::uint64_t),
      {"mode", [](const ExperimentConfig& c) { return json(to_string(c.train.mode)); },
       [](ExperimentConfig& c, const json& j) { c.train.mode = parse_train_mode(as<std::string>(j, "mode")); }},
      AGB_FIELD("epochs", train.epochs, std::size_t),
      AGB_FIELD("batch_size", train.batch_size, std::size_t),
      AGB_FIELD("lambda_mse", train.lambda_mse, double),
      AGB_FIELD("alpha", train.agb.alpha, double),
      AGB_FIELD("beta_init", train.agb.beta_init, double),
      AGB_FIELD("clip", train.agb.clip, double),
      AGB_FIELD("ma_decay", train.agb.ma_decay, double),
      AGB_FIELD("ratio", train.agb.ratio, double),
      AGB_FIELD("rate", train.agb.rate, double),
      AGB_FIELD("n_discriminator", train.agb.n_discriminator, std::size_t),
      AGB_FIELD("seed", train.seed, std::uint64_t),
      AGB_FIELD("augment", train.augment, bool),
      AGB_FIELD("clip_bn_affine", train.clip_bn_affine, bool),
      AGB_FIELD("select_start_epoch", train.select_start_epoch, std::size_t),
      AGB_FIELD("eval_batch", train.eval_batch, std::size_t),
      {"embedder", [](const ExperimentConfig& c) { return json(embedder_name(c.train.embedder.kind)); },
       [](ExperimentConfig& c, const json& j) {
         const auto s = as<std::string>(j, "embedder");
         if (s == "projection")
           c.train.embedder.kind = EmbedderKind::projection;
         else if (s == "downsample")
           c.train.embedder.kind = EmbedderKind::downsample;
         else
           throw ConfigError("embedder: expected projection or downsample, got " + s);
       }},
      AGB_FIELD("embedder_seed", train.embedder.seed, std::uint64_t),
      AGB_FIELD("embedder_dim", train.embedder.dim, std::size_t),
      AGB_FIELD("n_iterations", train.generator.n_iterations, std::size_t),
      AGB_FIELD("growth", train.generator.growth, std::size_t),
      AGB_FIELD("kernels", train.generator.kernels, std::size_t),
      AGB_FIELD("kernel_size", train.generator.kernel_size, std::size_t),
      AGB_FIELD("slope", train.generator.slope, double),
      {"critic_widths", [](const ExperimentConfig& c) { return json(c.train.critic.widths); },
       [](ExperimentConfig& c, const json& j) {
         if (!j.is_array() || j.size() != 4) throw ConfigError("critic_widths: expected an array of 4 integers");
         for (std::size_t i = 0; i < 4; ++i) c.train.critic.widths[i] = as<std::size_t>(j[i], "critic_widths");
       }},
      AGB_FIELD("critic_kernel", train.critic.kernel_size, std::size_t),
      {"critic_input",
       [](const ExperimentConfig& c) {
         return json(c.train.critic.input == CriticInput::complex ? "complex" : "magnitude");
       },
       [](ExperimentConfig& c, const json& j) {
         const auto s = as<std::string>(j, "critic_input");
         if (s == "complex")
           c.train.critic.input = CriticInput::complex;
         else if (s == "magnitude")
           c.train.critic.input = CriticInput::magnitude;
         else
           throw ConfigError("critic_input: expected complex or magnitude, got " + s);
       }},
  };
  return f;
}

#undef AGB_FIELD

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

json to_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& f : fields()) j[f.key] = f.get(cfg);
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : j.items()) {
    const auto* f = find_field(key);
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    f->set(cfg, value);
  }
  cfg.resolve();
  cfg.validate();
  return cfg;
}

ExperimentConfig apply_overrides(const ExperimentConfig& base, const std::map<std::string, std::string>& overrides) {
  json j = to_json(base);
  for (const auto& [key, text] : overrides) {
    const auto* f = find_field(key);
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    const json current = f->get(base);
    if (current.is_string()) {
      j[key] = text;
    } else {
      try {
        j[key] = json::parse(text);
      } catch (const json::exception&) {
        throw ConfigError(key + ": cannot parse value '" + text + "'");
      }
    }
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config " + path);
  out << to_json(cfg).dump(2) << "\n";
  if (!out) throw DataError("failed writing config " + path);
}

}  // namespace agb
