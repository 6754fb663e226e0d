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

#ifndef DPVI_LOGREG_HPP_
#define DPVI_LOGREG_HPP_

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dpvi/dataset.hpp"
#include "dpvi/variational.hpp"

namespace dpvi {

// ln(1 + e^t) without overflow for large |t|.
inline double log1p_exp(double t) {
  if (t > 0.0) return t + std::log1p(std::exp(-t));
  return std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// ln p(y | x, w) = ln sigmoid(y w.x) for y in {-1, +1}.
inline double logistic_log_likelihood(const Eigen::VectorXd& w,
                                      const Eigen::VectorXd& x, double y) {
  if (w.size() != x.size()) {
    throw std::invalid_argument("weight and feature dimensions differ");
  }
  if (y != 1.0 && y != -1.0) {
    throw std::invalid_argument("labels must be -1 or +1");
  }
  return -log1p_exp(-y * w.dot(x));
}

inline Eigen::VectorXd logistic_log_likelihood_grad(const Eigen::VectorXd& w,
                                                    const Eigen::VectorXd& x,
                                                    double y) {
  if (w.size() != x.size()) {
    throw std::invalid_argument("weight and feature dimensions differ");
  }
  if (y != 1.0 && y != -1.0) {
    throw std::invalid_argument("labels must be -1 or +1");
  }
  return y * sigmoid(-y * w.dot(x)) * x;
}

// Bayesian logistic regression with an independent Gaussian prior per weight.
// The weights live in a single identity block, so the ELBO's KL term is
// available in closed form.
class logistic_regression {
 public:
  logistic_regression(Eigen::VectorXd prior_mean, Eigen::VectorXd prior_var)
      : prior_mean_(std::move(prior_mean)), prior_var_(std::move(prior_var)) {
    if (prior_mean_.size() != prior_var_.size() || prior_mean_.size() == 0) {
      throw std::invalid_argument("prior mean/variance sizes are invalid");
    }
    if (!(prior_var_.minCoeff() > 0.0)) {
      throw std::invalid_argument("prior variances must be positive");
    }
    blocks_ = {parameter_block{"weights",
                               static_cast<int>(prior_mean_.size()),
                               transform_kind::identity}};
  }

  const std::vector<parameter_block>& blocks() const { return blocks_; }

  double log_likelihood(const Eigen::VectorXd& theta, const dataset& data,
                        Eigen::Index i) const {
    return logistic_log_likelihood(theta, data.features.row(i).transpose(),
                                   data.labels[i]);
  }

  Eigen::VectorXd log_likelihood_grad(const Eigen::VectorXd& theta,
                                      const dataset& data,
                                      Eigen::Index i) const {
    return logistic_log_likelihood_grad(
        theta, data.features.row(i).transpose(), data.labels[i]);
  }

  double log_prior(const Eigen::VectorXd& theta) const {
    if (theta.size() != prior_mean_.size()) {
      throw std::invalid_argument("parameter dimension mismatch");
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const double diff = theta[j] - prior_mean_[j];
      total += -0.5 * diff * diff / prior_var_[j] -
               0.5 * std::log(2.0 * std::numbers::pi * prior_var_[j]);
    }
    return total;
  }

  Eigen::VectorXd log_prior_grad(const Eigen::VectorXd& theta) const {
    if (theta.size() != prior_mean_.size()) {
      throw std::invalid_argument("parameter dimension mismatch");
    }
    return (prior_mean_ - theta).cwiseQuotient(prior_var_);
  }

  std::optional<gaussian_prior_spec> gaussian_prior_info() const {
    return gaussian_prior_spec{prior_mean_, prior_var_};
  }

 private:
  Eigen::VectorXd prior_mean_;
  Eigen::VectorXd prior_var_;
  std::vector<parameter_block> blocks_;
};

// Posterior predictive P(y = +1 | x) under the mean-field posterior, using
// the probit approximation to the logistic-Gaussian integral:
//   P = sigmoid(m / sqrt(1 + pi s^2 / 8)),
// with m = mean.x and s^2 = sum_d exp(2 log_std_d) x_d^2.
inline double predict_probability(const gaussian_variational& vp,
                                  const Eigen::VectorXd& x) {
  if (x.size() != vp.dim()) {
    throw std::invalid_argument("feature dimension does not match posterior");
  }
  const double m = vp.mean.dot(x);
  double s2 = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    s2 += std::exp(2.0 * vp.log_std[j]) * x[j] * x[j];
  }
  return sigmoid(m / std::sqrt(1.0 + std::numbers::pi * s2 / 8.0));
}

// Fraction of labels matched by thresholding the predictive probability at
// 1/2. Ties (probability exactly 1/2) count as predicting +1.
inline double classification_accuracy(const gaussian_variational& vp,
                                      const dataset& test) {
  if (!test.has_labels()) {
    throw std::invalid_argument("accuracy requires labelled data");
  }
  if (test.rows() == 0) {
    throw std::invalid_argument("accuracy requires at least one example");
  }
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const double p = predict_probability(vp, test.features.row(i).transpose());
    const double predicted = p >= 0.5 ? 1.0 : -1.0;
    if (predicted == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.rows());
}

}  // namespace dpvi

#endif  // DPVI_LOGREG_HPP_
