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

#ifndef DPVI_EXPERIMENT_HPP_
#define DPVI_EXPERIMENT_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dpvi/accounting.hpp"
#include "dpvi/config.hpp"
#include "dpvi/data.hpp"
#include "dpvi/gmm.hpp"
#include "dpvi/logreg.hpp"
#include "dpvi/optimizer.hpp"
#include "dpvi/trace_io.hpp"
#include "dpvi/version.hpp"

namespace dpvi {

struct run_result {
  std::string method;  // moments | advanced | non_private
  int run_index = 0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  std::optional<double> epsilon;  // total bounded-adjacency epsilon
  std::optional<double> metric;
  std::string trace_file;
  std::optional<std::string> error;
  bool diverged = false;
};

struct method_aggregate {
  std::string method;
  double sigma = 0.0;
  std::optional<double> epsilon;
  std::optional<double> metric_mean;
  std::optional<double> metric_sem;
  int n_runs = 0;  // successful runs entering the mean
};

struct experiment_output {
  std::vector<run_result> runs;
  std::vector<method_aggregate> aggregates;
  std::string runs_file;
  std::string aggregate_file;
};

namespace detail {

inline column_schema schema_from_config(const experiment_config& cfg) {
  column_schema schema;
  schema.has_header = cfg.header;
  schema.rule = label_rule::parse(cfg.label_rule_text);
  std::istringstream in(cfg.columns);
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token == "numeric") {
      schema.columns.push_back(column_kind::numeric);
    } else if (token == "categorical") {
      schema.columns.push_back(column_kind::categorical);
    } else if (token == "label") {
      schema.columns.push_back(column_kind::label);
    } else {
      throw config_error("field 'data.columns': unknown column kind '" +
                         token + "'");
    }
  }
  if (schema.columns.empty()) {
    throw config_error("field 'data.columns': empty schema");
  }
  return schema;
}

struct prepared_data {
  dataset train;
  dataset test;
  nlohmann::json report;
};

inline prepared_data prepare_logreg_data(const experiment_config& cfg) {
  prepared_data out;
  long dropped = 0;
  if (cfg.source == "synth") {
    const synth_logreg_result synth =
        synth_logreg(cfg.n, cfg.dim, cfg.w_scale, cfg.data_seed);
    std::tie(out.train, out.test) =
        train_test_split(synth.data, cfg.train_fraction, cfg.data_seed);
  } else {
    const column_schema schema = schema_from_config(cfg);
    csv_load_result train_load = load_csv(cfg.train_csv, schema);
    dropped += train_load.rows_dropped_missing;
    if (cfg.test_csv.empty()) {
      std::tie(out.train, out.test) = train_test_split(
          train_load.data, cfg.train_fraction, cfg.data_seed);
    } else {
      csv_load_result test_load =
          load_csv(cfg.test_csv, schema, &train_load.vocab);
      dropped += test_load.rows_dropped_missing;
      out.train = std::move(train_load.data);
      out.test = std::move(test_load.data);
    }
  }
  if (cfg.standardize) {
    const standardizer scaler = standardizer::fit(out.train);
    out.train = scaler.apply(out.train);
    out.test = scaler.apply(out.test);
  }
  if (cfg.add_bias) {
    out.train = append_bias_column(out.train);
    out.test = append_bias_column(out.test);
  }
  out.report = nlohmann::json{{"train_rows", out.train.rows()},
                              {"test_rows", out.test.rows()},
                              {"features", out.train.dim()},
                              {"rows_dropped_missing", dropped},
                              {"standardized", cfg.standardize},
                              {"bias_column", cfg.add_bias}};
  return out;
}

inline prepared_data prepare_gmm_data(const experiment_config& cfg) {
  prepared_data out;
  long dropped = 0;
  if (cfg.source == "synth") {
    std::tie(out.train, out.test) =
        synth_gmm(cfg.n_train, cfg.n_test, cfg.data_seed);
  } else {
    const column_schema schema = schema_from_config(cfg);
    csv_load_result train_load = load_csv(cfg.train_csv, schema);
    dropped += train_load.rows_dropped_missing;
    if (cfg.test_csv.empty()) {
      std::tie(out.train, out.test) = train_test_split(
          train_load.data, cfg.train_fraction, cfg.data_seed);
    } else {
      csv_load_result test_load =
          load_csv(cfg.test_csv, schema, &train_load.vocab);
      dropped += test_load.rows_dropped_missing;
      out.train = std::move(train_load.data);
      out.test = std::move(test_load.data);
    }
  }
  out.report = nlohmann::json{{"train_rows", out.train.rows()},
                              {"test_rows", out.test.rows()},
                              {"features", out.train.dim()},
                              {"rows_dropped_missing", dropped},
                              {"standardized", false},
                              {"bias_column", false}};
  return out;
}

inline optimizer_config optimizer_from_config(const experiment_config& cfg,
                                              double sigma,
                                              std::uint64_t seed) {
  optimizer_config opt;
  opt.sampling_ratio = cfg.sampling_ratio;
  opt.steps = cfg.steps;
  opt.step_size = cfg.step_size;
  opt.clip = cfg.clip;
  opt.noise_multiplier = sigma;
  opt.mc_samples = cfg.mc_samples;
  opt.seed = seed;
  opt.adagrad_fuzz = cfg.adagrad_fuzz;
  opt.sampling = cfg.sampling == "poisson" ? sampling_scheme::poisson
                                           : sampling_scheme::fixed_size;
  opt.delta = cfg.delta;
  return opt;
}

template <variational_model M>
gaussian_variational initial_posterior(const M& model,
                                       const experiment_config& cfg,
                                       std::uint64_t seed) {
  gaussian_variational vp = make_variational(model, cfg.init_log_std);
  if (cfg.init_mean_jitter > 0.0) {
    std::mt19937_64 rng = make_stream(seed, rng_stream::init);
    for (Eigen::Index j = 0; j < vp.dim(); ++j) {
      vp.mean[j] = cfg.init_mean_jitter * standard_normal(rng);
    }
  }
  return vp;
}

// One (sigma, label set) group of runs. Methods sharing a sigma share the
// actual optimization; only their reported epsilons differ.
struct run_group {
  double sigma = 0.0;
  std::vector<std::string> methods;
  std::vector<std::optional<double>> epsilons;  // parallel to methods
  std::string file_tag;
};

inline std::vector<run_group> plan_groups(const experiment_config& cfg) {
  std::vector<run_group> groups;
  if (cfg.noise_multiplier == 0.0 && !cfg.epsilon_target.has_value()) {
    groups.push_back(run_group{0.0, {"non_private"}, {std::nullopt}, "run"});
    return groups;
  }
  if (cfg.epsilon_target.has_value()) {
    for (const accounting_method method : cfg.accounting) {
      run_group group;
      group.sigma = calibrate_sigma_for_budget(
          *cfg.epsilon_target, cfg.delta, cfg.sampling_ratio, cfg.steps,
          method);
      group.methods = {accounting_method_name(method)};
      group.epsilons = {accounted_epsilon(method, group.sigma,
                                          cfg.sampling_ratio, cfg.steps,
                                          cfg.delta)};
      group.file_tag = group.methods.front();
      groups.push_back(std::move(group));
    }
    return groups;
  }
  run_group group;
  group.sigma = cfg.noise_multiplier;
  for (const accounting_method method : cfg.accounting) {
    group.methods.push_back(accounting_method_name(method));
    group.epsilons.push_back(accounted_epsilon(
        method, group.sigma, cfg.sampling_ratio, cfg.steps, cfg.delta));
  }
  group.file_tag = "run";
  groups.push_back(std::move(group));
  return groups;
}

inline nlohmann::json run_to_json(const run_result& r) {
  return nlohmann::json{
      {"method", r.method},
      {"run_index", r.run_index},
      {"seed", r.seed},
      {"sigma", r.sigma},
      {"epsilon", r.epsilon.has_value() ? nlohmann::json(*r.epsilon)
                                        : nlohmann::json(nullptr)},
      {"metric", r.metric.has_value() ? nlohmann::json(*r.metric)
                                      : nlohmann::json(nullptr)},
      {"trace_file", r.trace_file},
      {"error", r.error.has_value() ? nlohmann::json(*r.error)
                                    : nlohmann::json(nullptr)},
      {"diverged", r.diverged},
  };
}

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

}  // namespace detail

// Runs repeats seeds per accounting group, writes one trace file per run,
// a runs.jsonl with one line per (method, run) and an aggregate.json with
// per-method mean and standard error of the test metric. Per-run failures
// are recorded in place of a metric; the remaining runs still execute.
// Output bytes are deterministic for a fixed config except for the timestamp
// inside aggregate.json's "meta" object.
inline experiment_output run_experiment(const experiment_config& cfg) {
  cfg.validate();
  if (cfg.task != "logreg" && cfg.task != "gmm") {
    throw config_error("run_experiment expects task logreg or gmm");
  }
  if (cfg.epsilon_target.has_value() && cfg.noise_multiplier > 0.0) {
    throw config_error(
        "set either optimizer.noise_multiplier or "
        "experiment.epsilon_target, not both");
  }
  std::filesystem::create_directories(cfg.output_dir);

  const bool is_logreg = cfg.task == "logreg";
  detail::prepared_data data = is_logreg ? detail::prepare_logreg_data(cfg)
                                         : detail::prepare_gmm_data(cfg);

  std::optional<logistic_regression> logreg_model;
  std::optional<gaussian_mixture> gmm_model;
  if (is_logreg) {
    const Eigen::Index d = data.train.dim();
    logreg_model.emplace(Eigen::VectorXd::Constant(d, cfg.prior_mean),
                         Eigen::VectorXd::Constant(d, cfg.prior_var));
  } else {
    gmm_model.emplace(cfg.components, static_cast<int>(data.train.dim()),
                      cfg.dirichlet_alpha);
  }

  experiment_output output;
  const std::vector<detail::run_group> groups = detail::plan_groups(cfg);
  for (const detail::run_group& group : groups) {
    std::vector<double> metrics;
    for (int k = 0; k < cfg.repeats; ++k) {
      const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(k);
      run_result base;
      base.run_index = k;
      base.seed = seed;
      base.sigma = group.sigma;
      base.trace_file =
          "trace_" + group.file_tag + "_" + std::to_string(k) + ".jsonl";
      try {
        const optimizer_config opt =
            detail::optimizer_from_config(cfg, group.sigma, seed);
        dpvi_result fitted;
        if (is_logreg) {
          fitted = run_dpvi(*logreg_model, data.train,
                            detail::initial_posterior(*logreg_model, cfg, seed),
                            opt);
        } else {
          fitted = run_dpvi(*gmm_model, data.train,
                            detail::initial_posterior(*gmm_model, cfg, seed),
                            opt);
        }
        {
          std::ofstream trace_out(
              std::filesystem::path(cfg.output_dir) / base.trace_file);
          write_trace(fitted.trace, trace_out);
        }
        base.diverged = fitted.diverged;
        if (fitted.diverged) {
          base.error = "run diverged (non-finite iterate); partial trace kept";
        } else if (is_logreg) {
          base.metric = classification_accuracy(fitted.posterior, data.test);
        } else {
          std::mt19937_64 eval_rng =
              make_stream(seed, rng_stream::evaluation);
          base.metric = predictive_log_likelihood(
              *gmm_model, fitted.posterior, data.test, cfg.predictive_samples,
              eval_rng);
        }
      } catch (const std::exception& e) {
        base.error = e.what();
      }
      if (base.metric.has_value()) metrics.push_back(*base.metric);
      for (std::size_t m = 0; m < group.methods.size(); ++m) {
        run_result row = base;
        row.method = group.methods[m];
        row.epsilon = group.epsilons[m];
        output.runs.push_back(std::move(row));
      }
    }
    for (std::size_t m = 0; m < group.methods.size(); ++m) {
      method_aggregate agg;
      agg.method = group.methods[m];
      agg.sigma = group.sigma;
      agg.epsilon = group.epsilons[m];
      agg.n_runs = static_cast<int>(metrics.size());
      if (!metrics.empty()) {
        double mean = 0.0;
        for (const double v : metrics) mean += v;
        mean /= static_cast<double>(metrics.size());
        double sem = 0.0;
        if (metrics.size() > 1) {
          double ss = 0.0;
          for (const double v : metrics) ss += (v - mean) * (v - mean);
          const double sample_var =
              ss / static_cast<double>(metrics.size() - 1);
          sem = std::sqrt(sample_var / static_cast<double>(metrics.size()));
        }
        agg.metric_mean = mean;
        agg.metric_sem = sem;
      }
      output.aggregates.push_back(std::move(agg));
    }
  }

  const std::filesystem::path dir(cfg.output_dir);
  output.runs_file = (dir / "runs.jsonl").string();
  {
    std::ofstream out(output.runs_file);
    for (const run_result& r : output.runs) {
      out << detail::run_to_json(r).dump() << '\n';
    }
  }

  nlohmann::json methods_json = nlohmann::json::array();
  for (const method_aggregate& agg : output.aggregates) {
    methods_json.push_back(nlohmann::json{
        {"method", agg.method},
        {"sigma", agg.sigma},
        {"epsilon", agg.epsilon.has_value() ? nlohmann::json(*agg.epsilon)
                                            : nlohmann::json(nullptr)},
        {"metric_mean", agg.metric_mean.has_value()
                            ? nlohmann::json(*agg.metric_mean)
                            : nlohmann::json(nullptr)},
        {"metric_sem", agg.metric_sem.has_value()
                           ? nlohmann::json(*agg.metric_sem)
                           : nlohmann::json(nullptr)},
        {"n_runs", agg.n_runs},
    });
  }
  nlohmann::json config_json = nlohmann::json::object();
  for (const auto& [key, value] : cfg.to_values()) config_json[key] = value;
  const nlohmann::json aggregate{
      {"task", cfg.task},
      {"metric", is_logreg ? "test_accuracy" : "test_predictive_log_likelihood"},
      {"delta", cfg.delta},
      {"epsilon_target", cfg.epsilon_target.has_value()
                             ? nlohmann::json(*cfg.epsilon_target)
                             : nlohmann::json(nullptr)},
      {"methods", methods_json},
      {"data", data.report},
      {"config", config_json},
      {"version", version_string},
      {"meta", nlohmann::json{{"timestamp", detail::iso_timestamp()}}},
  };
  output.aggregate_file = (dir / "aggregate.json").string();
  {
    std::ofstream out(output.aggregate_file);
    out << aggregate.dump(2) << '\n';
  }
  return output;
}

// Writes the synthetic dataset described by the config to train.csv /
// test.csv plus a meta.json describing the generator.
inline void run_synth(const experiment_config& cfg) {
  cfg.validate();
  if (cfg.task != "synth") {
    throw config_error("run_synth expects experiment.task = synth");
  }
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  nlohmann::json meta{{"kind", cfg.kind},
                      {"seed", cfg.data_seed},
                      {"version", version_string}};
  if (cfg.kind == "logreg") {
    const synth_logreg_result synth =
        synth_logreg(cfg.n, cfg.dim, cfg.w_scale, cfg.data_seed);
    auto [train, test] =
        train_test_split(synth.data, cfg.train_fraction, cfg.data_seed);
    write_csv(train, (dir / "train.csv").string());
    write_csv(test, (dir / "test.csv").string());
    std::vector<double> w(synth.true_weights.data(),
                          synth.true_weights.data() + synth.true_weights.size());
    meta["true_weights"] = w;
    meta["train_rows"] = train.rows();
    meta["test_rows"] = test.rows();
    meta["label_rule"] = "ge:0";
  } else {
    auto [train, test] = synth_gmm(cfg.n_train, cfg.n_test, cfg.data_seed);
    write_csv(train, (dir / "train.csv").string());
    write_csv(test, (dir / "test.csv").string());
    meta["train_rows"] = train.rows();
    meta["test_rows"] = test.rows();
  }
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

// Budgets for a single mechanism description, in the order requested:
// "moments", "advanced" or "both".
inline std::vector<std::pair<std::string, privacy_budget>> account_query(
    const mechanism_params& params, double delta, const std::string& method) {
  std::vector<std::pair<std::string, privacy_budget>> out;
  if (method == "moments" || method == "both") {
    out.emplace_back("moments", bounded_dp_epsilon(params, delta));
  }
  if (method == "advanced" || method == "both") {
    out.emplace_back("advanced", advanced_pipeline_epsilon(params, delta));
  }
  if (out.empty()) {
    throw std::invalid_argument("method must be moments, advanced or both");
  }
  return out;
}

// Merges aggregate.json files produced with an epsilon target into one CSV
// with a row per target and mean/sem columns per accounting method, sorted by
// epsilon. Column layout: epsilon, then <method>_mean, <method>_sem pairs.
inline void emit_plot_data(const std::vector<std::string>& aggregate_files,
                           const std::string& out_csv) {
  if (aggregate_files.empty()) {
    throw std::invalid_argument("no aggregate files given");
  }
  struct plot_row {
    double epsilon;
    std::map<std::string, std::pair<double, double>> by_method;
  };
  std::vector<plot_row> rows;
  std::vector<std::string> method_order;
  for (const std::string& file : aggregate_files) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open aggregate '" + file + "'");
    nlohmann::json j;
    in >> j;
    if (j.at("epsilon_target").is_null()) {
      throw std::runtime_error("aggregate '" + file +
                               "' has no epsilon_target; plot data needs "
                               "budget-matched runs");
    }
    plot_row row;
    row.epsilon = j.at("epsilon_target").get<double>();
    for (const nlohmann::json& m : j.at("methods")) {
      const std::string name = m.at("method").get<std::string>();
      if (name == "non_private") continue;
      if (m.at("metric_mean").is_null()) {
        throw std::runtime_error("aggregate '" + file + "' method '" + name +
                                 "' has no successful runs");
      }
      row.by_method[name] = {m.at("metric_mean").get<double>(),
                             m.at("metric_sem").get<double>()};
      if (std::find(method_order.begin(), method_order.end(), name) ==
          method_order.end()) {
        method_order.push_back(name);
      }
    }
    if (row.by_method.empty()) {
      throw std::runtime_error("aggregate '" + file +
                               "' contains no accounting methods");
    }
    rows.push_back(std::move(row));
  }
  for (const plot_row& row : rows) {
    for (const std::string& name : method_order) {
      if (row.by_method.count(name) == 0) {
        throw std::runtime_error(
            "aggregates disagree on their accounting methods");
      }
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const plot_row& a, const plot_row& b) {
              return a.epsilon < b.epsilon;
            });
  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write '" + out_csv + "'");
  out << "epsilon";
  for (const std::string& name : method_order) {
    out << ',' << name << "_mean," << name << "_sem";
  }
  out << '\n';
  out.precision(17);
  for (const plot_row& row : rows) {
    out << row.epsilon;
    for (const std::string& name : method_order) {
      const auto& [mean, sem] = row.by_method.at(name);
      out << ',' << mean << ',' << sem;
    }
    out << '\n';
  }
}

}  // namespace dpvi

#endif  // DPVI_EXPERIMENT_HPP_
