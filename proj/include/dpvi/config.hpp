// Copyright 2026 The dpvi Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPVI_CONFIG_HPP_
#define DPVI_CONFIG_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpvi/accounting.hpp"
#include "dpvi/data.hpp"

namespace dpvi {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Flat INI: [section] headers group keys, values are everything after the
// first '='. Keys are reported as "section.key". Comments start with '#' or
// ';' at the beginning of a line.
inline std::map<std::string, std::string> parse_ini(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  std::string section;
  long line_number = 0;
  const auto trim = [](const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
  };
  while (std::getline(in, line)) {
    ++line_number;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']' || stripped.size() < 3) {
        throw config_error("line " + std::to_string(line_number) +
                           ": malformed section header '" + stripped + "'");
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(line_number) +
                         ": expected key = value, got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    if (key.empty() || section.empty()) {
      throw config_error("line " + std::to_string(line_number) +
                         ": key outside a [section] or empty key");
    }
    const std::string full = section + "." + key;
    if (values.count(full) != 0) {
      throw config_error("duplicate key '" + full + "'");
    }
    values[full] = trim(stripped.substr(eq + 1));
  }
  return values;
}

inline double config_double(const std::string& key, const std::string& text) {
  if (text == "inf" || text == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw config_error("field '" + key + "': '" + text + "' is not a number");
  }
}

inline long config_long(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long value = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw config_error("field '" + key + "': '" + text +
                       "' is not an integer");
  }
}

inline std::uint64_t config_u64(const std::string& key,
                                const std::string& text) {
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::uint64_t>(value);
  } catch (const std::exception&) {
    throw config_error("field '" + key + "': '" + text +
                       "' is not an unsigned integer");
  }
}

inline bool config_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw config_error("field '" + key + "': expected true or false, got '" +
                     text + "'");
}

// Shortest representation that parses back to the same double, so that
// to_ini / from_ini round-trips are exact.
inline std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return nlohmann::json(value).dump();
}

}  // namespace detail

// Fully materialized experiment description. Every field has an explicit
// value after parsing; to_ini() emits all of them, and
// from_ini(to_ini(c)) == c holds exactly.
struct experiment_config {
  // [experiment]
  std::string task = "logreg";  // logreg | gmm | synth
  int repeats = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir = "out";
  std::vector<accounting_method> accounting = {accounting_method::moments,
                                               accounting_method::advanced};
  double delta = 1e-5;  // defaults to 1e-3 when task = gmm
  std::optional<double> epsilon_target;

  // [data]
  std::string source = "synth";  // synth | csv
  std::string kind = "logreg";   // generator / model family: logreg | gmm
  std::string train_csv;
  std::string test_csv;
  std::string columns;  // comma list of numeric|categorical|label
  std::string label_rule_text = "ge:0";
  bool header = false;
  double train_fraction = 0.8;
  std::uint64_t data_seed = 0;
  bool standardize = true;
  long n = 4000;
  int dim = 8;
  double w_scale = 4.0;
  long n_train = 1000;
  long n_test = 100;

  // [model]
  double prior_mean = 0.0;
  double prior_var = 1.0;
  bool add_bias = true;
  int components = 5;
  double dirichlet_alpha = 1.0;
  int predictive_samples = 1000;

  // [optimizer]
  double sampling_ratio = 0.05;
  long steps = 1000;
  double step_size = 1.0;
  double clip = 5.0;
  double noise_multiplier = 0.0;
  int mc_samples = 1;
  double adagrad_fuzz = 1e-8;
  std::string sampling = "poisson";  // poisson | fixed
  double init_log_std = -1.0;
  double init_mean_jitter = 0.0;

  bool operator==(const experiment_config&) const = default;

  static experiment_config from_values(std::map<std::string, std::string> kv);
  static experiment_config from_ini(const std::string& text) {
    return from_values(detail::parse_ini(text));
  }
  static experiment_config from_ini(
      const std::string& text,
      const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::map<std::string, std::string> kv = detail::parse_ini(text);
    for (const auto& [key, value] : overrides) kv[key] = value;
    return from_values(std::move(kv));
  }
  static experiment_config from_file(
      const std::string& path,
      const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_ini(buffer.str(), overrides);
  }

  std::map<std::string, std::string> to_values() const;

  std::string to_ini() const {
    const std::map<std::string, std::string> kv = to_values();
    std::ostringstream out;
    std::string section;
    for (const auto& [key, value] : kv) {
      const std::string sec = key.substr(0, key.find('.'));
      if (sec != section) {
        if (!section.empty()) out << '\n';
        out << '[' << sec << "]\n";
        section = sec;
      }
      out << key.substr(key.find('.') + 1) << " = " << value << '\n';
    }
    return out.str();
  }

  void validate() const;
};

inline std::string accounting_to_string(
    const std::vector<accounting_method>& methods) {
  std::string out;
  for (const accounting_method m : methods) {
    if (!out.empty()) out += ",";
    out += accounting_method_name(m);
  }
  return out;
}

inline std::vector<accounting_method> accounting_from_string(
    const std::string& text) {
  if (text == "both") {
    return {accounting_method::moments, accounting_method::advanced};
  }
  std::vector<accounting_method> methods;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token == "moments") {
      methods.push_back(accounting_method::moments);
    } else if (token == "advanced") {
      methods.push_back(accounting_method::advanced);
    } else {
      throw config_error("field 'experiment.accounting': unknown method '" +
                         token + "'");
    }
  }
  if (methods.empty()) {
    throw config_error("field 'experiment.accounting': empty method list");
  }
  return methods;
}

inline experiment_config experiment_config::from_values(
    std::map<std::string, std::string> kv) {
  experiment_config cfg;
  const auto take = [&kv](const std::string& key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string value = it->second;
    kv.erase(it);
    return value;
  };
  const auto take_string = [&](const std::string& key, std::string& field) {
    if (auto v = take(key)) field = *v;
  };
  const auto take_double = [&](const std::string& key, double& field) {
    if (auto v = take(key)) field = detail::config_double(key, *v);
  };
  const auto take_long = [&](const std::string& key, long& field) {
    if (auto v = take(key)) field = detail::config_long(key, *v);
  };
  const auto take_int = [&](const std::string& key, int& field) {
    if (auto v = take(key)) {
      field = static_cast<int>(detail::config_long(key, *v));
    }
  };
  const auto take_bool = [&](const std::string& key, bool& field) {
    if (auto v = take(key)) field = detail::config_bool(key, *v);
  };
  const auto take_u64 = [&](const std::string& key, std::uint64_t& field) {
    if (auto v = take(key)) field = detail::config_u64(key, *v);
  };

  take_string("experiment.task", cfg.task);
  // Task-dependent defaults are resolved before the remaining keys.
  cfg.delta = cfg.task == "gmm" ? 1e-3 : 1e-5;
  cfg.kind = cfg.task == "gmm" ? "gmm" : "logreg";

  take_int("experiment.repeats", cfg.repeats);
  take_u64("experiment.seed", cfg.base_seed);
  take_string("experiment.output_dir", cfg.output_dir);
  if (auto v = take("experiment.accounting")) {
    cfg.accounting = accounting_from_string(*v);
  }
  take_double("experiment.delta", cfg.delta);
  if (auto v = take("experiment.epsilon_target")) {
    if (*v == "none") {
      cfg.epsilon_target = std::nullopt;
    } else {
      cfg.epsilon_target =
          detail::config_double("experiment.epsilon_target", *v);
    }
  }

  take_string("data.source", cfg.source);
  take_string("data.kind", cfg.kind);
  take_string("data.train_csv", cfg.train_csv);
  take_string("data.test_csv", cfg.test_csv);
  take_string("data.columns", cfg.columns);
  take_string("data.label_rule", cfg.label_rule_text);
  take_bool("data.header", cfg.header);
  take_double("data.train_fraction", cfg.train_fraction);
  take_u64("data.seed", cfg.data_seed);
  take_bool("data.standardize", cfg.standardize);
  take_long("data.n", cfg.n);
  take_int("data.dim", cfg.dim);
  take_double("data.w_scale", cfg.w_scale);
  take_long("data.n_train", cfg.n_train);
  take_long("data.n_test", cfg.n_test);

  take_double("model.prior_mean", cfg.prior_mean);
  take_double("model.prior_var", cfg.prior_var);
  take_bool("model.add_bias", cfg.add_bias);
  take_int("model.components", cfg.components);
  take_double("model.dirichlet_alpha", cfg.dirichlet_alpha);
  take_int("model.predictive_samples", cfg.predictive_samples);

  take_double("optimizer.sampling_ratio", cfg.sampling_ratio);
  take_long("optimizer.steps", cfg.steps);
  take_double("optimizer.step_size", cfg.step_size);
  take_double("optimizer.clip", cfg.clip);
  take_double("optimizer.noise_multiplier", cfg.noise_multiplier);
  take_int("optimizer.mc_samples", cfg.mc_samples);
  take_double("optimizer.adagrad_fuzz", cfg.adagrad_fuzz);
  take_string("optimizer.sampling", cfg.sampling);
  take_double("optimizer.init_log_std", cfg.init_log_std);
  take_double("optimizer.init_mean_jitter", cfg.init_mean_jitter);

  if (!kv.empty()) {
    std::string unknown;
    for (const auto& [key, value] : kv) {
      if (!unknown.empty()) unknown += ", ";
      unknown += "'" + key + "'";
    }
    throw config_error("unknown config keys: " + unknown);
  }
  cfg.validate();
  return cfg;
}

inline std::map<std::string, std::string> experiment_config::to_values() const {
  std::map<std::string, std::string> kv;
  kv["experiment.task"] = task;
  kv["experiment.repeats"] = std::to_string(repeats);
  kv["experiment.seed"] = std::to_string(base_seed);
  kv["experiment.output_dir"] = output_dir;
  kv["experiment.accounting"] = accounting_to_string(accounting);
  kv["experiment.delta"] = detail::format_double(delta);
  kv["experiment.epsilon_target"] =
      epsilon_target.has_value() ? detail::format_double(*epsilon_target)
                                 : "none";
  kv["data.source"] = source;
  kv["data.kind"] = kind;
  kv["data.train_csv"] = train_csv;
  kv["data.test_csv"] = test_csv;
  kv["data.columns"] = columns;
  kv["data.label_rule"] = label_rule_text;
  kv["data.header"] = header ? "true" : "false";
  kv["data.train_fraction"] = detail::format_double(train_fraction);
  kv["data.seed"] = std::to_string(data_seed);
  kv["data.standardize"] = standardize ? "true" : "false";
  kv["data.n"] = std::to_string(n);
  kv["data.dim"] = std::to_string(dim);
  kv["data.w_scale"] = detail::format_double(w_scale);
  kv["data.n_train"] = std::to_string(n_train);
  kv["data.n_test"] = std::to_string(n_test);
  kv["model.prior_mean"] = detail::format_double(prior_mean);
  kv["model.prior_var"] = detail::format_double(prior_var);
  kv["model.add_bias"] = add_bias ? "true" : "false";
  kv["model.components"] = std::to_string(components);
  kv["model.dirichlet_alpha"] = detail::format_double(dirichlet_alpha);
  kv["model.predictive_samples"] = std::to_string(predictive_samples);
  kv["optimizer.sampling_ratio"] = detail::format_double(sampling_ratio);
  kv["optimizer.steps"] = std::to_string(steps);
  kv["optimizer.step_size"] = detail::format_double(step_size);
  kv["optimizer.clip"] = detail::format_double(clip);
  kv["optimizer.noise_multiplier"] = detail::format_double(noise_multiplier);
  kv["optimizer.mc_samples"] = std::to_string(mc_samples);
  kv["optimizer.adagrad_fuzz"] = detail::format_double(adagrad_fuzz);
  kv["optimizer.sampling"] = sampling;
  kv["optimizer.init_log_std"] = detail::format_double(init_log_std);
  kv["optimizer.init_mean_jitter"] = detail::format_double(init_mean_jitter);
  return kv;
}

inline void experiment_config::validate() const {
  const auto fail = [](const std::string& field, const std::string& why) {
    throw config_error("field '" + field + "': " + why);
  };
  if (task != "logreg" && task != "gmm" && task != "synth") {
    fail("experiment.task", "must be logreg, gmm or synth, got '" + task + "'");
  }
  if (repeats < 1) fail("experiment.repeats", "must be at least 1");
  if (!(delta > 0.0) || delta >= 1.0) {
    fail("experiment.delta", "must lie in (0, 1)");
  }
  if (epsilon_target.has_value() && !(*epsilon_target > 0.0)) {
    fail("experiment.epsilon_target", "must be positive");
  }
  if (source != "synth" && source != "csv") {
    fail("data.source", "must be synth or csv, got '" + source + "'");
  }
  if (kind != "logreg" && kind != "gmm") {
    fail("data.kind", "must be logreg or gmm, got '" + kind + "'");
  }
  if ((task == "logreg" && kind != "logreg") ||
      (task == "gmm" && kind != "gmm")) {
    fail("data.kind", "does not match experiment.task");
  }
  if (!(train_fraction >= 0.0) || train_fraction > 1.0) {
    fail("data.train_fraction", "must lie in [0, 1]");
  }
  if (source == "csv") {
    if (train_csv.empty()) fail("data.train_csv", "required when source=csv");
    if (columns.empty()) fail("data.columns", "required when source=csv");
  }
  if (n < 1) fail("data.n", "must be at least 1");
  if (dim < 1) fail("data.dim", "must be at least 1");
  if (n_train < 1) fail("data.n_train", "must be at least 1");
  if (n_test < 0) fail("data.n_test", "must be non-negative");
  try {
    label_rule::parse(label_rule_text);
  } catch (const std::invalid_argument& e) {
    fail("data.label_rule", e.what());
  }

  if (!(prior_var > 0.0)) fail("model.prior_var", "must be positive");
  if (components < 1) fail("model.components", "must be at least 1");
  if (!(dirichlet_alpha > 0.0)) {
    fail("model.dirichlet_alpha", "must be positive");
  }
  if (predictive_samples < 1) {
    fail("model.predictive_samples", "must be at least 1");
  }

  if (!(sampling_ratio > 0.0) || sampling_ratio > 1.0) {
    fail("optimizer.sampling_ratio", "must lie in (0, 1]");
  }
  if (steps < 0) fail("optimizer.steps", "must be non-negative");
  if (!(step_size > 0.0)) fail("optimizer.step_size", "must be positive");
  if (!(clip > 0.0)) fail("optimizer.clip", "must be positive");
  if (!(noise_multiplier >= 0.0)) {
    fail("optimizer.noise_multiplier", "must be non-negative");
  }
  if (noise_multiplier > 0.0 && !std::isfinite(clip)) {
    fail("optimizer.clip", "must be finite when noise_multiplier > 0");
  }
  if (mc_samples < 1) fail("optimizer.mc_samples", "must be at least 1");
  if (!(adagrad_fuzz > 0.0)) fail("optimizer.adagrad_fuzz", "must be positive");
  if (sampling != "poisson" && sampling != "fixed") {
    fail("optimizer.sampling", "must be poisson or fixed, got '" + sampling +
                                   "'");
  }
  if (!(init_mean_jitter >= 0.0)) {
    fail("optimizer.init_mean_jitter", "must be non-negative");
  }
}

// Parses "section.key=value" as passed on the command line.
inline std::pair<std::string, std::string> parse_override(
    const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw config_error("override '" + text +
                       "' must look like section.key=value");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

}  // namespace dpvi

#endif  // DPVI_CONFIG_HPP_
