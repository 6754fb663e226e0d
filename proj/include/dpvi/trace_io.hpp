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

#ifndef DPVI_TRACE_IO_HPP_
#define DPVI_TRACE_IO_HPP_

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "dpvi/accounting.hpp"
#include "dpvi/optimizer.hpp"

namespace dpvi {

inline nlohmann::json budget_to_json(const privacy_budget& budget) {
  return nlohmann::json{
      {"epsilon", budget.epsilon},
      {"delta", budget.delta},
      {"adjacency",
       budget.adj == adjacency::bounded ? "bounded" : "unbounded"},
  };
}

// One JSON object per iteration, then a closing privacy_report line. The
// stream stays valid JSON-lines: consumers may process it record by record
// without loading the whole run.
inline void write_trace(const run_trace& trace, std::ostream& out) {
  for (const iteration_record& rec : trace.iterations) {
    nlohmann::json line{
        {"iteration", rec.iteration},
        {"elbo", rec.elbo_estimate.has_value()
                     ? nlohmann::json(*rec.elbo_estimate)
                     : nlohmann::json(nullptr)},
        {"grad_norm_mean", rec.grad_norm_mean},
        {"clip_fraction", rec.clip_fraction},
        {"batch_size", rec.batch_size},
    };
    out << line.dump() << '\n';
  }
  nlohmann::json report{
      {"privacy_report",
       nlohmann::json{
           {"non_private", trace.non_private},
           {"poisson_sampling", trace.poisson_sampling},
           {"delta", trace.delta},
           {"moments", trace.moments_budget.has_value()
                           ? budget_to_json(*trace.moments_budget)
                           : nlohmann::json(nullptr)},
           {"advanced", trace.advanced_budget.has_value()
                            ? budget_to_json(*trace.advanced_budget)
                            : nlohmann::json(nullptr)},
       }},
  };
  out << report.dump() << '\n';
}

inline privacy_budget budget_from_json(const nlohmann::json& j) {
  privacy_budget budget;
  budget.epsilon = j.at("epsilon").get<double>();
  budget.delta = j.at("delta").get<double>();
  budget.adj = j.at("adjacency").get<std::string>() == "bounded"
                   ? adjacency::bounded
                   : adjacency::unbounded;
  return budget;
}

inline run_trace read_trace(std::istream& in) {
  run_trace trace;
  bool saw_report = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    if (j.contains("privacy_report")) {
      const nlohmann::json& report = j.at("privacy_report");
      trace.non_private = report.at("non_private").get<bool>();
      trace.poisson_sampling = report.at("poisson_sampling").get<bool>();
      trace.delta = report.at("delta").get<double>();
      if (!report.at("moments").is_null()) {
        trace.moments_budget = budget_from_json(report.at("moments"));
      }
      if (!report.at("advanced").is_null()) {
        trace.advanced_budget = budget_from_json(report.at("advanced"));
      }
      saw_report = true;
      continue;
    }
    iteration_record rec;
    rec.iteration = j.at("iteration").get<long>();
    if (!j.at("elbo").is_null()) rec.elbo_estimate = j.at("elbo").get<double>();
    rec.grad_norm_mean = j.at("grad_norm_mean").get<double>();
    rec.clip_fraction = j.at("clip_fraction").get<double>();
    rec.batch_size = j.at("batch_size").get<long>();
    trace.iterations.push_back(rec);
  }
  if (!saw_report) {
    throw std::runtime_error("trace stream is missing its privacy_report line");
  }
  return trace;
}

}  // namespace dpvi

#endif  // DPVI_TRACE_IO_HPP_
