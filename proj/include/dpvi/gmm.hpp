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

#ifndef DPVI_GMM_HPP_
#define DPVI_GMM_HPP_

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "dpvi/dataset.hpp"
#include "dpvi/rng.hpp"
#include "dpvi/variational.hpp"

namespace dpvi {

// ln sum_k pi_k N(x; mean_k, tau_k I), with component assignments summed out.
// means is K x D (one row per component); tau holds the K isotropic
// variances. Evaluated by log-sum-exp over the component log-densities.
inline double mixture_log_density(const Eigen::VectorXd& weights,
                                  const Eigen::MatrixXd& means,
                                  const Eigen::VectorXd& tau,
                                  const Eigen::VectorXd& x) {
  const Eigen::Index k = weights.size();
  const Eigen::Index d = x.size();
  if (means.rows() != k || tau.size() != k || means.cols() != d) {
    throw std::invalid_argument("mixture parameter dimensions disagree");
  }
  double peak = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd log_terms(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(weights[j] > 0.0) || !(tau[j] > 0.0)) {
      throw std::invalid_argument("weights and variances must be positive");
    }
    const double sq = (x - means.row(j).transpose()).squaredNorm();
    log_terms[j] =
        std::log(weights[j]) -
        0.5 * static_cast<double>(d) *
            std::log(2.0 * std::numbers::pi * tau[j]) -
        0.5 * sq / tau[j];
    peak = std::max(peak, log_terms[j]);
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) total += std::exp(log_terms[j] - peak);
  return peak + std::log(total);
}

struct mixture_density_grads {
  Eigen::VectorXd d_weights;
  Eigen::MatrixXd d_means;
  Eigen::VectorXd d_tau;
};

// Gradients of mixture_log_density. With responsibilities
// r_k = pi_k N_k / sum_j pi_j N_j:
//   d/d pi_k  = r_k / pi_k
//   d/d mu_k  = r_k (x - mu_k) / tau_k
//   d/d tau_k = r_k (|x - mu_k|^2 / (2 tau_k^2) - D / (2 tau_k))
inline mixture_density_grads mixture_log_density_grad(
    const Eigen::VectorXd& weights, const Eigen::MatrixXd& means,
    const Eigen::VectorXd& tau, const Eigen::VectorXd& x) {
  const Eigen::Index k = weights.size();
  const Eigen::Index d = x.size();
  if (means.rows() != k || tau.size() != k || means.cols() != d) {
    throw std::invalid_argument("mixture parameter dimensions disagree");
  }
  Eigen::VectorXd log_terms(k);
  Eigen::VectorXd sq(k);
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(weights[j] > 0.0) || !(tau[j] > 0.0)) {
      throw std::invalid_argument("weights and variances must be positive");
    }
    sq[j] = (x - means.row(j).transpose()).squaredNorm();
    log_terms[j] =
        std::log(weights[j]) -
        0.5 * static_cast<double>(d) *
            std::log(2.0 * std::numbers::pi * tau[j]) -
        0.5 * sq[j] / tau[j];
    peak = std::max(peak, log_terms[j]);
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) total += std::exp(log_terms[j] - peak);

  mixture_density_grads grads;
  grads.d_weights.resize(k);
  grads.d_means.resize(k, d);
  grads.d_tau.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double r = std::exp(log_terms[j] - peak) / total;
    grads.d_weights[j] = r / weights[j];
    grads.d_means.row(j) = (r / tau[j]) * (x - means.row(j).transpose());
    grads.d_tau[j] = r * (0.5 * sq[j] / (tau[j] * tau[j]) -
                          0.5 * static_cast<double>(d) / tau[j]);
  }
  return grads;
}

// Marginalized Gaussian mixture with a symmetric Dirichlet prior on the
// weights, standard normal priors on the component means, and inverse-gamma
// (shape 1, rate 1) priors on the isotropic variances. The constrained
// parameter vector is packed as [weights (K), means row-major (K*D),
// variances (K)]; the unconstrained blocks are an anchored softmax of width
// K-1, an identity block of width K*D and a log block of width K.
class gaussian_mixture {
 public:
  gaussian_mixture(int components, int dim, double dirichlet_alpha = 1.0)
      : components_(components), dim_(dim), alpha_(dirichlet_alpha) {
    if (components < 1 || dim < 1) {
      throw std::invalid_argument("components and dim must be at least 1");
    }
    if (!(dirichlet_alpha > 0.0)) {
      throw std::invalid_argument("dirichlet_alpha must be positive");
    }
    blocks_ = {
        parameter_block{"weights", components - 1,
                        transform_kind::anchored_softmax},
        parameter_block{"means", components * dim, transform_kind::identity},
        parameter_block{"variances", components, transform_kind::log_positive},
    };
  }

  int components() const { return components_; }
  int dim() const { return dim_; }
  const std::vector<parameter_block>& blocks() const { return blocks_; }

  Eigen::VectorXd weights_of(const Eigen::VectorXd& theta) const {
    return theta.segment(0, components_);
  }
  Eigen::MatrixXd means_of(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd means(components_, dim_);
    for (int j = 0; j < components_; ++j) {
      means.row(j) = theta.segment(components_ + j * dim_, dim_).transpose();
    }
    return means;
  }
  Eigen::VectorXd variances_of(const Eigen::VectorXd& theta) const {
    return theta.segment(components_ + components_ * dim_, components_);
  }

  double log_likelihood(const Eigen::VectorXd& theta, const dataset& data,
                        Eigen::Index i) const {
    check_theta(theta);
    return mixture_log_density(weights_of(theta), means_of(theta),
                               variances_of(theta),
                               data.features.row(i).transpose());
  }

  Eigen::VectorXd log_likelihood_grad(const Eigen::VectorXd& theta,
                                      const dataset& data,
                                      Eigen::Index i) const {
    check_theta(theta);
    const mixture_density_grads grads = mixture_log_density_grad(
        weights_of(theta), means_of(theta), variances_of(theta),
        data.features.row(i).transpose());
    return pack(grads);
  }

  double log_prior(const Eigen::VectorXd& theta) const {
    check_theta(theta);
    const Eigen::VectorXd weights = weights_of(theta);
    const Eigen::MatrixXd means = means_of(theta);
    const Eigen::VectorXd tau = variances_of(theta);
    check_domain(weights, tau);

    const double kd = static_cast<double>(components_);
    double total = std::lgamma(kd * alpha_) - kd * std::lgamma(alpha_);
    for (int j = 0; j < components_; ++j) {
      total += (alpha_ - 1.0) * std::log(weights[j]);
    }
    total += -0.5 * means.squaredNorm() -
             0.5 * kd * static_cast<double>(dim_) *
                 std::log(2.0 * std::numbers::pi);
    // Inverse-gamma(shape 1, rate 1): ln p(tau) = -2 ln tau - 1/tau.
    for (int j = 0; j < components_; ++j) {
      total += -2.0 * std::log(tau[j]) - 1.0 / tau[j];
    }
    return total;
  }

  Eigen::VectorXd log_prior_grad(const Eigen::VectorXd& theta) const {
    check_theta(theta);
    const Eigen::VectorXd weights = weights_of(theta);
    const Eigen::MatrixXd means = means_of(theta);
    const Eigen::VectorXd tau = variances_of(theta);
    check_domain(weights, tau);

    mixture_density_grads grads;
    grads.d_weights = (alpha_ - 1.0) * weights.cwiseInverse();
    grads.d_means = -means;
    grads.d_tau.resize(components_);
    for (int j = 0; j < components_; ++j) {
      grads.d_tau[j] = -2.0 / tau[j] + 1.0 / (tau[j] * tau[j]);
    }
    return pack(grads);
  }

  std::optional<gaussian_prior_spec> gaussian_prior_info() const {
    return std::nullopt;
  }

 private:
  void check_theta(const Eigen::VectorXd& theta) const {
    if (theta.size() != components_ + components_ * dim_ + components_) {
      throw std::invalid_argument("packed parameter size mismatch");
    }
  }

  void check_domain(const Eigen::VectorXd& weights,
                    const Eigen::VectorXd& tau) const {
    double sum = 0.0;
    for (int j = 0; j < components_; ++j) {
      if (!(weights[j] > 0.0)) {
        throw std::domain_error("mixture weights must be positive");
      }
      if (!(tau[j] > 0.0)) {
        throw std::domain_error("mixture variances must be positive");
      }
      sum += weights[j];
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::domain_error("mixture weights must sum to one");
    }
  }

  Eigen::VectorXd pack(const mixture_density_grads& grads) const {
    Eigen::VectorXd out(components_ + components_ * dim_ + components_);
    out.segment(0, components_) = grads.d_weights;
    for (int j = 0; j < components_; ++j) {
      out.segment(components_ + j * dim_, dim_) =
          grads.d_means.row(j).transpose();
    }
    out.segment(components_ + components_ * dim_, components_) = grads.d_tau;
    return out;
  }

  int components_;
  int dim_;
  double alpha_;
  std::vector<parameter_block> blocks_;
};

// Mean over the test set of ln E_q[p(x | theta)], the per-example predictive
// log-likelihood, estimated with n_samples posterior draws shared across the
// test examples.
inline double predictive_log_likelihood(const gaussian_mixture& model,
                                        const gaussian_variational& vp,
                                        const dataset& test, int n_samples,
                                        std::mt19937_64& rng) {
  if (test.rows() == 0) {
    throw std::invalid_argument("predictive likelihood needs test examples");
  }
  if (n_samples < 1) {
    throw std::invalid_argument("n_samples must be at least 1");
  }
  Eigen::MatrixXd log_liks(test.rows(), n_samples);
  Eigen::VectorXd z(vp.dim());
  for (int s = 0; s < n_samples; ++s) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = standard_normal(rng);
    const reparam_sample draw = sample_reparam(vp, z);
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      log_liks(i, s) = model.log_likelihood(draw.constrained, test, i);
    }
  }
  const double log_n = std::log(static_cast<double>(n_samples));
  double total = 0.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const double peak = log_liks.row(i).maxCoeff();
    double acc = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      acc += std::exp(log_liks(i, s) - peak);
    }
    total += peak + std::log(acc) - log_n;
  }
  return total / static_cast<double>(test.rows());
}

}  // namespace dpvi

#endif  // DPVI_GMM_HPP_
