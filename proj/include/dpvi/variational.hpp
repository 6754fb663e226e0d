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

#ifndef DPVI_VARIATIONAL_HPP_
#define DPVI_VARIATIONAL_HPP_

#include <Eigen/Core>
#include <cmath>
#include <concepts>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpvi/dataset.hpp"

namespace dpvi {

// Deterministic map from a block of unconstrained optimizer coordinates to
// the model's constrained parameter space.
//  - identity:         theta = u
//  - log_positive:     theta = exp(u), elementwise
//  - anchored_softmax: K-1 free logits padded with a fixed 0 logit, mapped
//    through softmax to a point on the K-simplex
enum class transform_kind { identity, log_positive, anchored_softmax };

struct parameter_block {
  std::string name;
  int width = 0;  // unconstrained width
  transform_kind transform = transform_kind::identity;

  int constrained_width() const {
    return transform == transform_kind::anchored_softmax ? width + 1 : width;
  }
};

namespace detail {

inline Eigen::VectorXd anchored_softmax_point(
    const Eigen::Ref<const Eigen::VectorXd>& u) {
  const Eigen::Index k = u.size() + 1;
  double peak = 0.0;  // the anchored logit
  for (Eigen::Index i = 0; i < u.size(); ++i) peak = std::max(peak, u[i]);
  Eigen::VectorXd point(k);
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    point[i] = std::exp(u[i] - peak);
  }
  point[k - 1] = std::exp(-peak);
  point /= point.sum();
  return point;
}

}  // namespace detail

// Applies a block's transform. Returns the constrained values together with
// the log-Jacobian correction ln|det d theta / d u| of the map. For the
// anchored softmax the correction is sum_k ln pi_k, the log-volume of the
// (K-1)-dimensional coordinate patch.
inline std::pair<Eigen::VectorXd, double> transform_forward(
    const parameter_block& block, const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != block.width) {
    throw std::invalid_argument("transform input width mismatch for block '" +
                                block.name + "'");
  }
  switch (block.transform) {
    case transform_kind::identity:
      return {u, 0.0};
    case transform_kind::log_positive:
      return {u.array().exp().matrix(), u.sum()};
    case transform_kind::anchored_softmax: {
      const Eigen::VectorXd point = detail::anchored_softmax_point(u);
      // sum_k ln pi_k computed from the logits so that components whose
      // probability underflows to zero still yield a finite correction.
      double peak = 0.0;
      for (Eigen::Index i = 0; i < u.size(); ++i) peak = std::max(peak, u[i]);
      double norm = std::exp(-peak);
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        norm += std::exp(u[i] - peak);
      }
      const double k = static_cast<double>(u.size() + 1);
      const double log_jac = u.sum() - k * (peak + std::log(norm));
      return {point, log_jac};
    }
  }
  throw std::logic_error("unknown transform kind");
}

// Pulls a gradient with respect to the constrained values back to the
// unconstrained coordinates (J^T g for the block's Jacobian J).
inline Eigen::VectorXd transform_vjp(
    const parameter_block& block,
    const Eigen::Ref<const Eigen::VectorXd>& constrained,
    const Eigen::Ref<const Eigen::VectorXd>& grad_constrained) {
  if (constrained.size() != block.constrained_width() ||
      grad_constrained.size() != block.constrained_width()) {
    throw std::invalid_argument("vjp width mismatch for block '" + block.name +
                                "'");
  }
  switch (block.transform) {
    case transform_kind::identity:
      return grad_constrained;
    case transform_kind::log_positive:
      return grad_constrained.cwiseProduct(constrained);
    case transform_kind::anchored_softmax: {
      const double dot = grad_constrained.dot(constrained);
      Eigen::VectorXd out(block.width);
      for (int j = 0; j < block.width; ++j) {
        out[j] = constrained[j] * (grad_constrained[j] - dot);
      }
      return out;
    }
  }
  throw std::logic_error("unknown transform kind");
}

// Gradient of the block's log-Jacobian correction with respect to the
// unconstrained coordinates.
inline Eigen::VectorXd transform_log_jacobian_grad(
    const parameter_block& block,
    const Eigen::Ref<const Eigen::VectorXd>& constrained) {
  if (constrained.size() != block.constrained_width()) {
    throw std::invalid_argument("jacobian-grad width mismatch for block '" +
                                block.name + "'");
  }
  switch (block.transform) {
    case transform_kind::identity:
      return Eigen::VectorXd::Zero(block.width);
    case transform_kind::log_positive:
      return Eigen::VectorXd::Ones(block.width);
    case transform_kind::anchored_softmax: {
      const double k = static_cast<double>(block.width + 1);
      Eigen::VectorXd out(block.width);
      for (int j = 0; j < block.width; ++j) {
        out[j] = 1.0 - k * constrained[j];
      }
      return out;
    }
  }
  throw std::logic_error("unknown transform kind");
}

// Mean-field Gaussian posterior over the unconstrained coordinates, stored as
// mean and log standard deviation per coordinate, plus the block structure
// that maps samples into the model's parameter space.
struct gaussian_variational {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
  std::vector<parameter_block> blocks;

  Eigen::Index dim() const { return mean.size(); }

  Eigen::Index constrained_dim() const {
    Eigen::Index total = 0;
    for (const parameter_block& b : blocks) total += b.constrained_width();
    return total;
  }

  void validate() const {
    Eigen::Index total = 0;
    for (const parameter_block& b : blocks) {
      if (b.width < 0) {
        throw std::invalid_argument("block '" + b.name +
                                    "' has negative width");
      }
      total += b.width;
    }
    if (mean.size() != total || log_std.size() != total) {
      throw std::invalid_argument(
          "variational parameter sizes do not match the block widths");
    }
    if (!mean.allFinite() || !log_std.allFinite()) {
      throw std::invalid_argument("variational parameters must be finite");
    }
  }

  static gaussian_variational from_blocks(std::vector<parameter_block> blocks,
                                          double init_log_std = -1.0) {
    Eigen::Index total = 0;
    for (const parameter_block& b : blocks) total += b.width;
    gaussian_variational vp;
    vp.mean = Eigen::VectorXd::Zero(total);
    vp.log_std = Eigen::VectorXd::Constant(total, init_log_std);
    vp.blocks = std::move(blocks);
    return vp;
  }
};

// One reparametrized draw theta = T(mean + exp(log_std) * z) with its
// log-Jacobian correction.
struct reparam_sample {
  Eigen::VectorXd z;
  Eigen::VectorXd unconstrained;
  Eigen::VectorXd constrained;
  double log_jacobian = 0.0;
};

inline reparam_sample sample_reparam(const gaussian_variational& vp,
                                     const Eigen::VectorXd& z) {
  if (z.size() != vp.dim()) {
    throw std::invalid_argument("z dimension does not match the posterior");
  }
  reparam_sample sample;
  sample.z = z;
  sample.unconstrained =
      vp.mean + vp.log_std.array().exp().matrix().cwiseProduct(z);
  sample.constrained.resize(vp.constrained_dim());
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  for (const parameter_block& block : vp.blocks) {
    auto [values, log_jac] =
        transform_forward(block, sample.unconstrained.segment(in, block.width));
    sample.constrained.segment(out, block.constrained_width()) = values;
    sample.log_jacobian += log_jac;
    in += block.width;
    out += block.constrained_width();
  }
  return sample;
}

// Differential entropy of the mean-field Gaussian:
//   H = sum(log_std) + D/2 ln(2 pi e).
inline double entropy(const gaussian_variational& vp) {
  const double d = static_cast<double>(vp.dim());
  return vp.log_std.sum() +
         0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

// KL(q || p) between the mean-field posterior and a diagonal Gaussian prior
// with the given mean and variance per coordinate. Meaningful as the ELBO's
// KL term only when every block is an identity transform.
inline double gaussian_kl(const gaussian_variational& vp,
                          const Eigen::VectorXd& prior_mean,
                          const Eigen::VectorXd& prior_var) {
  if (prior_mean.size() != vp.dim() || prior_var.size() != vp.dim()) {
    throw std::invalid_argument("prior dimension does not match the posterior");
  }
  if (!(prior_var.minCoeff() > 0.0)) {
    throw std::invalid_argument("prior variances must be positive");
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < vp.dim(); ++i) {
    const double var_q = std::exp(2.0 * vp.log_std[i]);
    const double diff = vp.mean[i] - prior_mean[i];
    kl += 0.5 * ((var_q + diff * diff) / prior_var[i] - 1.0 +
                 std::log(prior_var[i]) - 2.0 * vp.log_std[i]);
  }
  return kl;
}

struct gaussian_prior_spec {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

// A model exposes its block structure, per-example log-likelihood in the
// constrained space with gradient, and a log-prior with gradient. Models
// whose prior is diagonal Gaussian over identity blocks also expose it
// directly so the ELBO can use the closed-form KL term.
template <typename M>
concept variational_model = requires(const M& m, const Eigen::VectorXd& theta,
                                     const dataset& data, Eigen::Index i) {
  { m.blocks() } -> std::convertible_to<const std::vector<parameter_block>&>;
  { m.log_likelihood(theta, data, i) } -> std::convertible_to<double>;
  {
    m.log_likelihood_grad(theta, data, i)
  } -> std::convertible_to<Eigen::VectorXd>;
  { m.log_prior(theta) } -> std::convertible_to<double>;
  { m.log_prior_grad(theta) } -> std::convertible_to<Eigen::VectorXd>;
  {
    m.gaussian_prior_info()
  } -> std::convertible_to<std::optional<gaussian_prior_spec>>;
};

template <variational_model M>
gaussian_variational make_variational(const M& model,
                                      double init_log_std = -1.0) {
  return gaussian_variational::from_blocks(model.blocks(), init_log_std);
}

namespace detail {

template <variational_model M>
bool has_closed_form_kl(const M& model) {
  if (!model.gaussian_prior_info().has_value()) return false;
  for (const parameter_block& b : model.blocks()) {
    if (b.transform != transform_kind::identity) return false;
  }
  return true;
}

// ln q(theta_unconstrained) evaluated through the reparametrization, which
// reduces to a function of z and the log stds alone.
inline double log_q_at(const gaussian_variational& vp,
                       const reparam_sample& s) {
  const double d = static_cast<double>(vp.dim());
  return -vp.log_std.sum() - 0.5 * d * std::log(2.0 * std::numbers::pi) -
         0.5 * s.z.squaredNorm();
}

// Gradient in the unconstrained coordinates of
// ln p(theta_constrained) + log-Jacobian, at one sample.
template <variational_model M>
Eigen::VectorXd prior_pullback_grad(const M& model,
                                    const gaussian_variational& vp,
                                    const reparam_sample& s) {
  const Eigen::VectorXd grad_constrained = model.log_prior_grad(s.constrained);
  Eigen::VectorXd out(vp.dim());
  Eigen::Index in = 0;
  Eigen::Index at = 0;
  for (const parameter_block& block : vp.blocks) {
    const auto constrained = s.constrained.segment(in, block.constrained_width());
    out.segment(at, block.width) =
        transform_vjp(block, constrained,
                      grad_constrained.segment(in, block.constrained_width())) +
        transform_log_jacobian_grad(block, constrained);
    in += block.constrained_width();
    at += block.width;
  }
  return out;
}

}  // namespace detail

inline std::vector<reparam_sample> draw_reparam_samples(
    const gaussian_variational& vp, std::span<const Eigen::VectorXd> zs) {
  if (zs.empty()) {
    throw std::invalid_argument("at least one reparametrization draw required");
  }
  std::vector<reparam_sample> samples;
  samples.reserve(zs.size());
  for (const Eigen::VectorXd& z : zs) samples.push_back(sample_reparam(vp, z));
  return samples;
}

// Monte Carlo estimate of example i's expected log-likelihood under q.
template <variational_model M>
double likelihood_value_part(const M& model, const dataset& data,
                             Eigen::Index i,
                             std::span<const reparam_sample> samples) {
  double total = 0.0;
  for (const reparam_sample& s : samples) {
    total += model.log_likelihood(s.constrained, data, i);
  }
  return total / static_cast<double>(samples.size());
}

// Estimate of KL(q || p) shared by every example of the iteration. Closed
// form when the prior is diagonal Gaussian over identity blocks; otherwise
// the pathwise estimate E_z[ln q - ln p - log-Jacobian] on the same draws
// used for the likelihood term.
template <variational_model M>
double kl_value(const M& model, const gaussian_variational& vp,
                std::span<const reparam_sample> samples) {
  if (detail::has_closed_form_kl(model)) {
    const auto prior = model.gaussian_prior_info();
    return gaussian_kl(vp, prior->mean, prior->var);
  }
  double total = 0.0;
  for (const reparam_sample& s : samples) {
    total += detail::log_q_at(vp, s) - model.log_prior(s.constrained) -
             s.log_jacobian;
  }
  return total / static_cast<double>(samples.size());
}

// Gradient of the likelihood part with respect to [mean; log_std], stacked in
// that order. The chain rule through theta = mean + exp(log_std) * z gives
// the log_std rows an extra factor z * exp(log_std).
template <variational_model M>
Eigen::VectorXd likelihood_gradient_part(
    const M& model, const gaussian_variational& vp, const dataset& data,
    Eigen::Index i, std::span<const reparam_sample> samples) {
  const Eigen::Index d = vp.dim();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * d);
  const Eigen::VectorXd stds = vp.log_std.array().exp().matrix();
  for (const reparam_sample& s : samples) {
    const Eigen::VectorXd grad_constrained =
        model.log_likelihood_grad(s.constrained, data, i);
    Eigen::VectorXd grad_unconstrained(d);
    Eigen::Index in = 0;
    Eigen::Index at = 0;
    for (const parameter_block& block : vp.blocks) {
      grad_unconstrained.segment(at, block.width) = transform_vjp(
          block, s.constrained.segment(in, block.constrained_width()),
          grad_constrained.segment(in, block.constrained_width()));
      in += block.constrained_width();
      at += block.width;
    }
    grad.head(d) += grad_unconstrained;
    grad.tail(d) +=
        grad_unconstrained.cwiseProduct(s.z).cwiseProduct(stds);
  }
  return grad / static_cast<double>(samples.size());
}

// Gradient of kl_value with respect to [mean; log_std].
template <variational_model M>
Eigen::VectorXd kl_gradient(const M& model, const gaussian_variational& vp,
                            std::span<const reparam_sample> samples) {
  const Eigen::Index d = vp.dim();
  Eigen::VectorXd grad(2 * d);
  if (detail::has_closed_form_kl(model)) {
    const auto prior = model.gaussian_prior_info();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double var_q = std::exp(2.0 * vp.log_std[j]);
      grad[j] = (vp.mean[j] - prior->mean[j]) / prior->var[j];
      grad[d + j] = var_q / prior->var[j] - 1.0;
    }
    return grad;
  }
  // d/d log_std of ln q at fixed z is -1 per coordinate; the rest is the
  // pathwise pullback of -(ln p + log-Jacobian).
  const Eigen::VectorXd stds = vp.log_std.array().exp().matrix();
  Eigen::VectorXd mean_part = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd log_std_part = Eigen::VectorXd::Zero(d);
  for (const reparam_sample& s : samples) {
    const Eigen::VectorXd pullback = detail::prior_pullback_grad(model, vp, s);
    mean_part -= pullback;
    log_std_part -= pullback.cwiseProduct(s.z).cwiseProduct(stds);
  }
  const double n = static_cast<double>(samples.size());
  grad.head(d) = mean_part / n;
  grad.tail(d) = (log_std_part / n).array() - 1.0;
  return grad;
}

// Example i's additive share of the ELBO,
//   L_i = E_q[ln p(x_i | theta)] - KL(q || p) / n,
// so that sum_i L_i over the full dataset is the usual evidence lower bound.
template <variational_model M>
double elbo_contribution(const M& model, const gaussian_variational& vp,
                         const dataset& data, Eigen::Index i,
                         std::span<const reparam_sample> samples,
                         double dataset_rows) {
  if (!(dataset_rows > 0.0)) {
    throw std::invalid_argument("dataset_rows must be positive");
  }
  return likelihood_value_part(model, data, i, samples) -
         kl_value(model, vp, samples) / dataset_rows;
}

template <variational_model M>
double elbo_contribution(const M& model, const gaussian_variational& vp,
                         const dataset& data, Eigen::Index i,
                         std::span<const Eigen::VectorXd> zs,
                         double dataset_rows) {
  const std::vector<reparam_sample> samples = draw_reparam_samples(vp, zs);
  return elbo_contribution(model, vp, data, i,
                           std::span<const reparam_sample>(samples),
                           dataset_rows);
}

// Gradient of L_i with respect to [mean; log_std]. This is the per-example
// vector the private optimizer clips and aggregates.
template <variational_model M>
Eigen::VectorXd elbo_gradient_contribution(
    const M& model, const gaussian_variational& vp, const dataset& data,
    Eigen::Index i, std::span<const reparam_sample> samples,
    double dataset_rows) {
  if (!(dataset_rows > 0.0)) {
    throw std::invalid_argument("dataset_rows must be positive");
  }
  return likelihood_gradient_part(model, vp, data, i, samples) -
         kl_gradient(model, vp, samples) / dataset_rows;
}

template <variational_model M>
Eigen::VectorXd elbo_gradient_contribution(
    const M& model, const gaussian_variational& vp, const dataset& data,
    Eigen::Index i, std::span<const Eigen::VectorXd> zs, double dataset_rows) {
  const std::vector<reparam_sample> samples = draw_reparam_samples(vp, zs);
  return elbo_gradient_contribution(model, vp, data, i,
                                    std::span<const reparam_sample>(samples),
                                    dataset_rows);
}

// Full-dataset ELBO estimate on the given draws; diagnostic companion to the
// per-example decomposition above.
template <variational_model M>
double elbo_estimate(const M& model, const gaussian_variational& vp,
                     const dataset& data,
                     std::span<const reparam_sample> samples) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    total += likelihood_value_part(model, data, i, samples);
  }
  return total - kl_value(model, vp, samples);
}

}  // namespace dpvi

#endif  // DPVI_VARIATIONAL_HPP_
