#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "kbc/train.hpp"

namespace kbc {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    T out{};
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(value, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      out = std::stoull(value, &used);
    } else if constexpr (std::is_same_v<T, long>) {
      out = std::stol(value, &used);
    } else {
      out = std::stoi(value, &used);
    }
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + value + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("invalid boolean '" + value + "' for " + key);
}

template <typename T>
bool contains(const std::vector<T>& v, T x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::TranslationalMargin:
      return "translational-margin";
    case Objective::IbleCe:
      return "ible-ce";
    case Objective::CibleCe:
      return "cible-ce";
  }
  return "?";
}

Objective parse_objective(std::string_view s) {
  if (s == "translational-margin" || s == "margin") return Objective::TranslationalMargin;
  if (s == "ible-ce" || s == "ible") return Objective::IbleCe;
  if (s == "cible-ce" || s == "cible") return Objective::CibleCe;
  throw ConfigError("unknown objective '" + std::string(s) +
                    "' (expected translational-margin, ible-ce or cible-ce)");
}

std::string_view to_string(OptimizerKind o) { return o == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (dim <= 0) throw ConfigError("dim must be positive");
  if (is_rotational(model) && dim % 2 != 0) {
    throw ConfigError("rotational models need an even dim");
  }
  if (!(gamma > 0)) throw ConfigError("gamma must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (negatives <= 0) throw ConfigError("negatives must be positive");
  if (epochs < 0 || max_steps < 0) throw ConfigError("budgets must be non-negative");
  if (norm != 0 && norm != 1 && norm != 2) throw ConfigError("norm must be 0, 1 or 2");
  if (eval_every < 0 || patience <= 0) throw ConfigError("invalid early-stopping settings");
  if (workers <= 0) throw ConfigError("workers must be positive");
  if (!(logit_scale > 0 && std::isfinite(logit_scale))) {
    throw ConfigError("logit_scale must be positive");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 &&
        adam_eps > 0)) {
    throw ConfigError("invalid Adam constants");
  }
}

bool TrainConfig::on_search_grid(const SearchSpace& space) const {
  return contains(space.learning_rates, learning_rate) &&
         contains(space.batch_sizes, batch_size) && contains(space.dims, dim) &&
         contains(space.gammas, gamma);
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"model", std::string(to_string(model))},
      {"objective", std::string(to_string(objective))},
      {"dim", std::to_string(dim)},
      {"gamma", fmt_double(gamma)},
      {"alpha", fmt_double(alpha)},
      {"learning_rate", fmt_double(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"negatives", std::to_string(negatives)},
      {"epochs", std::to_string(epochs)},
      {"max_steps", std::to_string(max_steps)},
      {"optimizer", std::string(to_string(optimizer))},
      {"adam_beta1", fmt_double(adam_beta1)},
      {"adam_beta2", fmt_double(adam_beta2)},
      {"adam_eps", fmt_double(adam_eps)},
      {"norm", std::to_string(norm_p())},
      {"seed", std::to_string(seed)},
      {"filter_negatives", filter_negatives ? "true" : "false"},
      {"hold_out_query", hold_out_query ? "true" : "false"},
      {"logit_scale", fmt_double(logit_scale)},
      {"eval_every", std::to_string(eval_every)},
      {"patience", std::to_string(patience)},
      {"workers", std::to_string(workers)},
  };
}

void apply_settings(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : kv) {
    if (key == "model") {
      cfg.model = parse_model_kind(value);
    } else if (key == "objective") {
      cfg.objective = parse_objective(value);
    } else if (key == "dim") {
      cfg.dim = parse_number<int>(key, value);
    } else if (key == "gamma") {
      cfg.gamma = parse_number<double>(key, value);
    } else if (key == "alpha") {
      cfg.alpha = parse_number<double>(key, value);
    } else if (key == "learning_rate") {
      cfg.learning_rate = parse_number<double>(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_number<int>(key, value);
    } else if (key == "negatives") {
      cfg.negatives = parse_number<int>(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_number<int>(key, value);
    } else if (key == "max_steps") {
      cfg.max_steps = parse_number<long>(key, value);
    } else if (key == "optimizer") {
      cfg.optimizer = parse_optimizer(value);
    } else if (key == "adam_beta1") {
      cfg.adam_beta1 = parse_number<double>(key, value);
    } else if (key == "adam_beta2") {
      cfg.adam_beta2 = parse_number<double>(key, value);
    } else if (key == "adam_eps") {
      cfg.adam_eps = parse_number<double>(key, value);
    } else if (key == "norm") {
      cfg.norm = parse_number<int>(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "filter_negatives") {
      cfg.filter_negatives = parse_bool(key, value);
    } else if (key == "logit_scale") {
      cfg.logit_scale = parse_number<double>(key, value);
    } else if (key == "hold_out_query") {
      cfg.hold_out_query = parse_bool(key, value);
    } else if (key == "eval_every") {
      cfg.eval_every = parse_number<int>(key, value);
    } else if (key == "patience") {
      cfg.patience = parse_number<int>(key, value);
    } else if (key == "workers") {
      cfg.workers = parse_number<int>(key, value);
    } else {
      unknown.push_back(key);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
}

std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                    const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(origin, line_no, "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError(origin, line_no, "empty key");
    kv[key] = value;
  }
  return kv;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  TrainConfig cfg;
  apply_settings(cfg, parse_key_values(in, path.string()));
  cfg.validate();
  return cfg;
}

std::string config_text(const TrainConfig& cfg) {
  std::ostringstream out;
  for (const auto& [k, v] : cfg.to_map()) out << k << " = " << v << "\n";
  return out.str();
}

}  // namespace kbc
