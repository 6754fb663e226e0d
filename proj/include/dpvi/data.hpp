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

#ifndef DPVI_DATA_HPP_
#define DPVI_DATA_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpvi/dataset.hpp"
#include "dpvi/rng.hpp"

namespace dpvi {

class csv_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class column_kind { numeric, categorical, label };

// Rule mapping a raw label cell to {-1, +1}, written
//   "ge:<x>"  numeric cell >= x
//   "gt:<x>"  numeric cell >  x
//   "eq:<s>"  string cell == s
// with matches becoming +1 and everything else -1.
struct label_rule {
  enum class kind { numeric_ge, numeric_gt, equals };
  kind rule_kind = kind::numeric_ge;
  double threshold = 0.0;
  std::string value;

  static label_rule parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("label rule must look like ge:<x>, gt:<x> "
                                  "or eq:<s>, got '" +
                                  text + "'");
    }
    const std::string op = text.substr(0, colon);
    const std::string arg = text.substr(colon + 1);
    label_rule rule;
    if (op == "eq") {
      rule.rule_kind = kind::equals;
      rule.value = arg;
      return rule;
    }
    if (op != "ge" && op != "gt") {
      throw std::invalid_argument("unknown label rule operator '" + op + "'");
    }
    rule.rule_kind = op == "ge" ? kind::numeric_ge : kind::numeric_gt;
    try {
      std::size_t used = 0;
      rule.threshold = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
    } catch (const std::exception&) {
      throw std::invalid_argument("label rule threshold '" + arg +
                                  "' is not numeric");
    }
    return rule;
  }

  std::string to_string() const {
    switch (rule_kind) {
      case kind::numeric_ge:
      case kind::numeric_gt: {
        std::ostringstream out;
        out.precision(17);
        out << (rule_kind == kind::numeric_ge ? "ge:" : "gt:") << threshold;
        return out.str();
      }
      case kind::equals:
        return "eq:" + value;
    }
    return "";
  }

  bool operator==(const label_rule&) const = default;
};

struct column_schema {
  std::vector<column_kind> columns;
  label_rule rule;
  bool has_header = false;
};

// Category levels per categorical column index, in first-seen order. Fixing a
// vocabulary when loading held-out data keeps the one-hot layout identical to
// the training encoding.
struct categorical_vocab {
  std::map<int, std::vector<std::string>> levels;
};

struct csv_load_result {
  dataset data;
  categorical_vocab vocab;
  long rows_dropped_missing = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) {
    // Trim surrounding spaces; values like " ?" appear in the wild.
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos
                        ? std::string()
                        : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "?";
}

inline double parse_numeric_cell(const std::string& cell, long row, int col) {
  try {
    std::size_t used = 0;
    const double value = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return value;
  } catch (const std::exception&) {
    throw csv_error("row " + std::to_string(row) + ", column " +
                    std::to_string(col) + ": '" + cell + "' is not numeric");
  }
}

}  // namespace detail

// Loads a CSV under the given schema: numeric columns pass through,
// categorical columns are one-hot encoded (one indicator per level), the
// label column is mapped to {-1, +1} by the schema's rule. Rows containing a
// missing cell ("" or "?") are dropped and counted. When `fixed_vocab` is
// provided, a category absent from it is an error instead of a new level.
inline csv_load_result load_csv(const std::string& path,
                                const column_schema& schema,
                                const categorical_vocab* fixed_vocab = nullptr) {
  if (schema.columns.empty()) {
    throw std::invalid_argument("column schema is empty");
  }
  int label_count = 0;
  for (const column_kind kind : schema.columns) {
    if (kind == column_kind::label) ++label_count;
  }
  if (label_count > 1) {
    throw std::invalid_argument("schema declares more than one label column");
  }

  std::ifstream in(path);
  if (!in) throw csv_error("cannot open '" + path + "'");

  csv_load_result result;
  if (fixed_vocab != nullptr) result.vocab = *fixed_vocab;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  long line_number = 0;
  bool header_skipped = !schema.has_header;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_skipped) {
      header_skipped = true;
      continue;
    }
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != schema.columns.size()) {
      throw csv_error("row " + std::to_string(line_number) + ": expected " +
                      std::to_string(schema.columns.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    bool missing = false;
    for (const std::string& cell : cells) {
      if (detail::is_missing(cell)) {
        missing = true;
        break;
      }
    }
    if (missing) {
      ++result.rows_dropped_missing;
      continue;
    }
    // Register categories on the first pass so the one-hot width is known.
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (schema.columns[c] != column_kind::categorical) continue;
      std::vector<std::string>& levels = result.vocab.levels[static_cast<int>(c)];
      if (std::find(levels.begin(), levels.end(), cells[c]) == levels.end()) {
        if (fixed_vocab != nullptr) {
          throw csv_error("row " + std::to_string(line_number) + ", column " +
                          std::to_string(c) + ": unseen category '" +
                          cells[c] + "'");
        }
        levels.push_back(cells[c]);
      }
    }
    rows.push_back(std::move(cells));
  }

  Eigen::Index width = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    switch (schema.columns[c]) {
      case column_kind::numeric:
        width += 1;
        break;
      case column_kind::categorical:
        width += static_cast<Eigen::Index>(
            result.vocab.levels.at(static_cast<int>(c)).size());
        break;
      case column_kind::label:
        break;
    }
  }

  result.data.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  result.data.features.setZero();
  if (label_count == 1) {
    result.data.labels.resize(static_cast<Eigen::Index>(rows.size()));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    Eigen::Index at = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const std::string& cell = rows[r][c];
      switch (schema.columns[c]) {
        case column_kind::numeric:
          result.data.features(static_cast<Eigen::Index>(r), at++) =
              detail::parse_numeric_cell(cell, static_cast<long>(r + 1),
                                         static_cast<int>(c));
          break;
        case column_kind::categorical: {
          const std::vector<std::string>& levels =
              result.vocab.levels.at(static_cast<int>(c));
          const auto it = std::find(levels.begin(), levels.end(), cell);
          result.data.features(
              static_cast<Eigen::Index>(r),
              at + static_cast<Eigen::Index>(it - levels.begin())) = 1.0;
          at += static_cast<Eigen::Index>(levels.size());
          break;
        }
        case column_kind::label: {
          bool positive = false;
          switch (schema.rule.rule_kind) {
            case label_rule::kind::numeric_ge:
              positive = detail::parse_numeric_cell(
                             cell, static_cast<long>(r + 1),
                             static_cast<int>(c)) >= schema.rule.threshold;
              break;
            case label_rule::kind::numeric_gt:
              positive = detail::parse_numeric_cell(
                             cell, static_cast<long>(r + 1),
                             static_cast<int>(c)) > schema.rule.threshold;
              break;
            case label_rule::kind::equals:
              positive = cell == schema.rule.value;
              break;
          }
          result.data.labels[static_cast<Eigen::Index>(r)] =
              positive ? 1.0 : -1.0;
          break;
        }
      }
    }
  }
  return result;
}

inline void write_csv(const dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw csv_error("cannot write '" + path + "'");
  out.precision(17);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      if (j > 0) out << ',';
      out << data.features(i, j);
    }
    if (data.has_labels()) out << ',' << data.labels[i];
    out << '\n';
  }
}

// Per-feature affine standardization fitted on the training split only.
// Scales are population standard deviations; a constant feature keeps scale 1
// so it is centered but not blown up.
struct standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static standardizer fit(const dataset& train) {
    if (train.rows() < 1) {
      throw std::invalid_argument("cannot standardize an empty dataset");
    }
    standardizer s;
    s.mean = train.features.colwise().mean();
    s.scale.resize(train.dim());
    for (Eigen::Index j = 0; j < train.dim(); ++j) {
      const double var =
          (train.features.col(j).array() - s.mean[j]).square().mean();
      const double std_dev = std::sqrt(var);
      s.scale[j] = std_dev > 0.0 ? std_dev : 1.0;
    }
    return s;
  }

  dataset apply(const dataset& data) const {
    if (data.dim() != mean.size()) {
      throw std::invalid_argument("standardizer dimension mismatch");
    }
    dataset out = data;
    out.features = (data.features.rowwise() - mean.transpose()).array()
                       .rowwise() /
                   scale.transpose().array();
    return out;
  }
};

// Deterministic shuffle-and-cut split; the train side gets
// floor(train_fraction * n) rows.
inline std::pair<dataset, dataset> train_test_split(const dataset& data,
                                                    double train_fraction,
                                                    std::uint64_t seed) {
  if (!(train_fraction >= 0.0) || train_fraction > 1.0) {
    throw std::invalid_argument("train_fraction must lie in [0, 1]");
  }
  const Eigen::Index n = data.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 rng = make_stream(seed, rng_stream::subsampling);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const Eigen::Index j = static_cast<Eigen::Index>(
        uniform_unit(rng) * static_cast<double>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(j)]);
  }
  const Eigen::Index n_train = static_cast<Eigen::Index>(
      std::floor(train_fraction * static_cast<double>(n)));

  const auto take = [&](Eigen::Index begin, Eigen::Index count) {
    dataset part;
    part.features.resize(count, data.dim());
    if (data.has_labels()) part.labels.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      part.features.row(i) = data.features.row(order[begin + i]);
      if (data.has_labels()) part.labels[i] = data.labels[order[begin + i]];
    }
    return part;
  };
  return {take(0, n_train), take(n_train, n - n_train)};
}

// Draws from an equal-weight mixture of five isotropic unit-variance
// Gaussians in the plane with means (0,0), (2,2), (2,-2), (-2,2), (-2,-2).
// When `train_components` is non-null it receives the generating component
// of each training row (useful for checking conditional statistics).
inline std::pair<dataset, dataset> synth_gmm(
    long n_train, long n_test, std::uint64_t seed,
    std::vector<int>* train_components = nullptr) {
  if (n_train < 0 || n_test < 0) {
    throw std::invalid_argument("sample counts must be non-negative");
  }
  constexpr double means[5][2] = {
      {0.0, 0.0}, {2.0, 2.0}, {2.0, -2.0}, {-2.0, 2.0}, {-2.0, -2.0}};
  std::mt19937_64 rng = make_stream(seed, rng_stream::init);
  const auto draw = [&](long n, std::vector<int>* components) {
    dataset data;
    data.features.resize(n, 2);
    if (components != nullptr) components->clear();
    for (long i = 0; i < n; ++i) {
      const int k = static_cast<int>(uniform_unit(rng) * 5.0);
      data.features(i, 0) = means[k][0] + standard_normal(rng);
      data.features(i, 1) = means[k][1] + standard_normal(rng);
      if (components != nullptr) components->push_back(k);
    }
    return data;
  };
  dataset train = draw(n_train, train_components);
  dataset test = draw(n_test, nullptr);
  return {std::move(train), std::move(test)};
}

struct synth_logreg_result {
  dataset data;
  Eigen::VectorXd true_weights;
};

// Standard-normal features with labels drawn from a logistic model whose true
// weight vector is w_scale * ones / sqrt(dim), so the signal strength is
// controlled by w_scale alone regardless of dimension.
inline synth_logreg_result synth_logreg(long n, int dim, double w_scale,
                                        std::uint64_t seed) {
  if (n < 0 || dim < 1) {
    throw std::invalid_argument("need n >= 0 and dim >= 1");
  }
  synth_logreg_result result;
  result.true_weights = Eigen::VectorXd::Constant(
      dim, w_scale / std::sqrt(static_cast<double>(dim)));
  result.data.features.resize(n, dim);
  result.data.labels.resize(n);
  std::mt19937_64 rng = make_stream(seed, rng_stream::init);
  for (long i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) {
      result.data.features(i, j) = standard_normal(rng);
    }
    const double logit =
        result.true_weights.dot(result.data.features.row(i).transpose());
    const double p_positive = 1.0 / (1.0 + std::exp(-logit));
    result.data.labels[i] = uniform_unit(rng) < p_positive ? 1.0 : -1.0;
  }
  return result;
}

inline dataset append_bias_column(const dataset& data) {
  dataset out;
  out.features.resize(data.rows(), data.dim() + 1);
  out.features.leftCols(data.dim()) = data.features;
  out.features.col(data.dim()).setOnes();
  out.labels = data.labels;
  return out;
}

}  // namespace dpvi

#endif  // DPVI_DATA_HPP_
