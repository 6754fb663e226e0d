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

// Command-line driver. Subcommands:
//   fit-logreg  run the private variational fit for logistic regression
//   fit-gmm     run it for the Gaussian mixture
//   synth       write a synthetic dataset described by a config
//   account     print privacy budgets for a mechanism description
//   plot-data   merge aggregate.json files into a plot-ready CSV
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime
// failure (I/O, divergence of every run, unachievable budget, ...).

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpvi/config.hpp"
#include "dpvi/experiment.hpp"
#include "dpvi/version.hpp"

namespace {

struct fit_options {
  std::string config_path;
  std::vector<std::string> overrides;
};

dpvi::experiment_config load_config(const fit_options& options,
                                    const std::string& expected_task) {
  std::vector<std::pair<std::string, std::string>> overrides;
  overrides.reserve(options.overrides.size());
  for (const std::string& text : options.overrides) {
    overrides.push_back(dpvi::parse_override(text));
  }
  dpvi::experiment_config cfg =
      dpvi::experiment_config::from_file(options.config_path, overrides);
  if (cfg.task != expected_task) {
    throw dpvi::config_error("config declares task '" + cfg.task +
                             "' but the subcommand expects '" + expected_task +
                             "'");
  }
  return cfg;
}

int run_fit(const fit_options& options, const std::string& task) {
  const dpvi::experiment_config cfg = load_config(options, task);
  const dpvi::experiment_output output = dpvi::run_experiment(cfg);
  int failures = 0;
  for (const dpvi::run_result& r : output.runs) {
    if (r.error.has_value()) ++failures;
  }
  for (const dpvi::method_aggregate& agg : output.aggregates) {
    nlohmann::json line{
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
    };
    std::cout << line.dump() << '\n';
  }
  std::cerr << "wrote " << output.aggregate_file << '\n';
  if (failures == static_cast<int>(output.runs.size())) {
    std::cerr << "all runs failed\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentially private variational inference"};
  app.set_version_flag("--version", std::string(dpvi::version_string));
  app.require_subcommand(1);

  fit_options logreg_options;
  CLI::App* fit_logreg =
      app.add_subcommand("fit-logreg", "fit Bayesian logistic regression");
  fit_logreg->add_option("--config", logreg_options.config_path,
                         "INI config file")
      ->required();
  fit_logreg->add_option("--set", logreg_options.overrides,
                         "override section.key=value");

  fit_options gmm_options;
  CLI::App* fit_gmm =
      app.add_subcommand("fit-gmm", "fit the Gaussian mixture model");
  fit_gmm->add_option("--config", gmm_options.config_path, "INI config file")
      ->required();
  fit_gmm->add_option("--set", gmm_options.overrides,
                      "override section.key=value");

  fit_options synth_options;
  CLI::App* synth =
      app.add_subcommand("synth", "write a synthetic dataset to output_dir");
  synth->add_option("--config", synth_options.config_path, "INI config file")
      ->required();
  synth->add_option("--set", synth_options.overrides,
                    "override section.key=value");

  CLI::App* account =
      app.add_subcommand("account", "print privacy budgets for a mechanism");
  double account_q = 0.01;
  double account_sigma = 0.0;
  long account_steps = 1;
  double account_delta = 1e-5;
  double account_clip = 1.0;
  long account_n = 0;
  std::string account_method = "both";
  account->add_option("--q", account_q, "per-example sampling ratio")
      ->required();
  account->add_option("--sigma", account_sigma, "noise multiplier")
      ->required();
  account->add_option("--steps", account_steps, "number of iterations")
      ->required();
  account->add_option("--delta", account_delta, "total failure probability")
      ->required();
  account->add_option("--clip", account_clip, "clipping bound (informational)");
  account->add_option("--dataset-size", account_n,
                      "dataset size (defaults to ceil(1/q))");
  account->add_option("--method", account_method,
                      "moments, advanced or both");

  CLI::App* plot =
      app.add_subcommand("plot-data", "merge aggregates into a CSV");
  std::string plot_out;
  std::vector<std::string> plot_inputs;
  plot->add_option("--out", plot_out, "output CSV path")->required();
  plot->add_option("aggregates", plot_inputs, "aggregate.json files")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Collapse CLI11's many parse-error codes onto the documented contract:
    // 0 for --help / --version, 1 for anything malformed.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (fit_logreg->parsed()) return run_fit(logreg_options, "logreg");
    if (fit_gmm->parsed()) return run_fit(gmm_options, "gmm");
    if (synth->parsed()) {
      dpvi::run_synth(load_config(synth_options, "synth"));
      return 0;
    }
    if (account->parsed()) {
      if (account_sigma == 0.0) {
        throw dpvi::config_error(
            "non-private configuration has no finite guarantee (sigma = 0)");
      }
      dpvi::mechanism_params params;
      params.noise_multiplier = account_sigma;
      params.clip = account_clip;
      params.sampling_ratio = account_q;
      params.steps = account_steps;
      params.dataset_size =
          account_n > 0
              ? account_n
              : static_cast<long>(std::ceil(1.0 / account_q));
      for (const auto& [name, budget] :
           dpvi::account_query(params, account_delta, account_method)) {
        nlohmann::json line{
            {"method", name},
            {"epsilon", budget.epsilon},
            {"delta", budget.delta},
            {"adjacency", budget.adj == dpvi::adjacency::bounded
                              ? "bounded"
                              : "unbounded"},
            {"q", account_q},
            {"sigma", account_sigma},
            {"steps", account_steps},
        };
        std::cout << line.dump() << '\n';
      }
      return 0;
    }
    if (plot->parsed()) {
      dpvi::emit_plot_data(plot_inputs, plot_out);
      return 0;
    }
  } catch (const dpvi::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid arguments: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
