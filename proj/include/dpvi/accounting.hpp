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

#ifndef DPVI_ACCOUNTING_HPP_
#define DPVI_ACCOUNTING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpvi/quadrature.hpp"

namespace dpvi {

// Neighbouring-dataset convention an (epsilon, delta) guarantee refers to:
// `bounded` means one record is replaced (dataset size public and fixed),
// `unbounded` means one record is added or removed.
enum class adjacency { bounded, unbounded };

struct privacy_budget {
  double epsilon = 0.0;
  double delta = 0.0;
  adjacency adj = adjacency::unbounded;
};

class calibration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameters of the iterated subsampled Gaussian mechanism as released by the
// optimizer: per-example contributions clipped to `clip` in L2, noise of
// standard deviation 2 * clip * noise_multiplier added to each coordinate of
// the batch sum, inclusion probability sampling_ratio per example and step.
struct mechanism_params {
  double noise_multiplier = 1.0;
  double clip = 1.0;
  double sampling_ratio = 1.0;
  long steps = 1;
  long dataset_size = 1;

  void validate() const {
    if (!(noise_multiplier > 0.0)) {
      throw std::invalid_argument(
          "noise_multiplier must be positive: a non-private configuration "
          "has no finite guarantee");
    }
    if (!(clip > 0.0) || !std::isfinite(clip)) {
      throw std::invalid_argument("clip must be positive and finite");
    }
    if (!(sampling_ratio > 0.0) || sampling_ratio > 1.0) {
      throw std::invalid_argument("sampling_ratio must lie in (0, 1]");
    }
    if (steps < 1) throw std::invalid_argument("steps must be at least 1");
    if (dataset_size < 1) {
      throw std::invalid_argument("dataset_size must be at least 1");
    }
    if (sampling_ratio * static_cast<double>(dataset_size) < 1.0) {
      throw std::invalid_argument(
          "expected batch size sampling_ratio * dataset_size is below 1");
    }
  }
};

namespace detail {

inline void check_delta(double delta, const char* what) {
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument(std::string(what) + " must lie in (0, 1)");
  }
}

}  // namespace detail

// Noise scale for one Gaussian-mechanism release: the classical sufficient
// condition sigma^2 > 2 ln(1.25/delta) sensitivity^2 / epsilon^2, evaluated
// at equality.
inline double calibrate_gaussian_sigma(double epsilon, double delta,
                                       double sensitivity) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  detail::check_delta(delta, "delta");
  if (!(sensitivity > 0.0)) {
    throw std::invalid_argument("sensitivity must be positive");
  }
  return std::sqrt(2.0 * std::log(1.25 / delta)) * sensitivity / epsilon;
}

// Sequential composition: epsilons and deltas add. All inputs must use the
// same adjacency convention; mixing the two would silently change what the
// summed guarantee means.
inline privacy_budget basic_composition(std::span<const privacy_budget> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("basic_composition needs at least one budget");
  }
  privacy_budget total{0.0, 0.0, parts.front().adj};
  for (const privacy_budget& p : parts) {
    if (p.adj != total.adj) {
      throw std::invalid_argument(
          "cannot compose budgets with different adjacency conventions");
    }
    if (!(p.epsilon >= 0.0) || !(p.delta >= 0.0)) {
      throw std::invalid_argument("budgets must be non-negative");
    }
    total.epsilon += p.epsilon;
    total.delta += p.delta;
  }
  return total;
}

// Strong composition of k runs of one (epsilon, delta)-DP mechanism at slack
// delta_prime:
//   epsilon_total = sqrt(2 k ln(1/delta_prime)) epsilon + k epsilon (e^eps - 1)
//   delta_total   = k delta + delta_prime
inline privacy_budget advanced_composition(
    double epsilon, double delta, long k, double delta_prime,
    adjacency adj = adjacency::unbounded) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  detail::check_delta(delta_prime, "delta_prime");
  const double kd = static_cast<double>(k);
  const double eps_total =
      std::sqrt(2.0 * kd * std::log(1.0 / delta_prime)) * epsilon +
      kd * epsilon * std::expm1(epsilon);
  return privacy_budget{eps_total, kd * delta + delta_prime, adj};
}

// Privacy amplification by sampling each example independently with
// probability q before running an (epsilon, delta)-DP mechanism:
//   epsilon' = ln(1 + q (e^eps - 1)),  delta' = q delta.
// Valid only when q exceeds delta. The min with the original epsilon guards
// against roundoff at q = 1, where the bound is exactly the input.
inline privacy_budget amplify_by_subsampling(const privacy_budget& budget,
                                             double q) {
  if (!(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("sampling ratio q must lie in (0, 1]");
  }
  if (!(budget.epsilon > 0.0) || !(budget.delta >= 0.0)) {
    throw std::invalid_argument("budget must have epsilon > 0 and delta >= 0");
  }
  if (!(q > budget.delta)) {
    throw std::invalid_argument(
        "amplification requires sampling ratio q > delta");
  }
  const double eps_amp =
      std::min(budget.epsilon, std::log1p(q * std::expm1(budget.epsilon)));
  return privacy_budget{eps_amp, q * budget.delta, budget.adj};
}

namespace detail {

// ln(mu(z) / mu0(z)) for mu0 = N(0, sigma^2) and the subsampled mixture
// mu = (1-q) N(0, sigma^2) + q N(1, sigma^2). With a = (2z - 1) / (2 sigma^2)
// the ratio is 1 - q + q e^a; both branches below stay finite for any a.
inline double log_mixture_ratio(double z, double q, double inv_two_sigma2) {
  const double a = (2.0 * z - 1.0) * inv_two_sigma2;
  if (a > 0.0) {
    return a + std::log(q + (1.0 - q) * std::exp(-a));
  }
  return std::log1p(q * std::expm1(a));
}

// log of E[(mu/mu0)^order] under mu0, restricted to [lo, hi]. The integrand
// spans hundreds of e-foldings for large orders, so it is peak-normalized in
// log space: a coarse scan locates the maximum M of the log integrand, the
// quadrature integrates exp(log f - M), and M is added back at the end.
template <typename LogRatio>
double log_restricted_moment(const LogRatio& log_ratio, double order,
                             double sigma, double lo, double hi,
                             double abs_tol) {
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const double log_norm =
      -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  const auto log_f = [&](double z) {
    return log_norm - z * z * inv_two_sigma2 + order * log_ratio(z);
  };
  constexpr int scan_points = 2049;
  double peak = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < scan_points; ++i) {
    const double z = lo + (hi - lo) * static_cast<double>(i) /
                              static_cast<double>(scan_points - 1);
    peak = std::max(peak, log_f(z));
  }
  const auto normalized = [&](double z) { return std::exp(log_f(z) - peak); };
  const double integral = integrate_adaptive(normalized, lo, hi, abs_tol);
  if (!(integral > 0.0)) {
    throw integration_error("moment integral is not positive");
  }
  return peak + std::log(integral);
}

}  // namespace detail

// Log-moment of order lambda of the privacy loss of one subsampled Gaussian
// step with sampling ratio q and noise multiplier sigma:
//   alpha(lambda) = ln max(E1, E2),
//   E1 = E_{z ~ mu0}[(mu/mu0)^lambda],  E2 = E_{z ~ mu}[(mu/mu0)^lambda],
// with mu0 = N(0, sigma^2), mu = (1-q) mu0 + q N(1, sigma^2). The integrals
// run over z in [-20 sigma, 20 sigma + 1], which covers both mixture modes in
// the subsampled regime. At q = 1 the moment has the closed form
// lambda (lambda + 1) / (2 sigma^2); that case is returned directly, since
// its mass sits near z = lambda + 1 and can leave the fixed window.
inline double log_moment_subsampled_gaussian(double q, double sigma,
                                             int lambda,
                                             double abs_tol = 1e-12) {
  if (!(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("sampling ratio q must lie in (0, 1]");
  }
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("noise multiplier sigma must be positive");
  }
  if (lambda < 1) throw std::invalid_argument("lambda must be at least 1");
  const double lam = static_cast<double>(lambda);
  if (q == 1.0) return lam * (lam + 1.0) / (2.0 * sigma * sigma);

  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const auto log_ratio = [q, inv_two_sigma2](double z) {
    return detail::log_mixture_ratio(z, q, inv_two_sigma2);
  };
  const double lo = -20.0 * sigma;
  const double hi = 20.0 * sigma + 1.0;
  // E2's density mu contributes one extra power of the ratio to mu0.
  const double log_e1 = detail::log_restricted_moment(log_ratio, lam, sigma,
                                                      lo, hi, abs_tol);
  const double log_e2 = detail::log_restricted_moment(
      log_ratio, lam + 1.0, sigma, lo, hi, abs_tol);
  return std::max(log_e1, log_e2);
}

// Per-step log-moments alpha(lambda) for lambda = 1..max_lambda together with
// the number of steps they will be composed over. Composition is linear in
// the log-moments, so `steps` simply scales them when converting to epsilon.
struct moment_ledger {
  std::vector<int> lambdas;
  std::vector<double> log_moments;
  long steps_composed = 0;

  void validate() const {
    if (lambdas.empty() || lambdas.size() != log_moments.size()) {
      throw std::invalid_argument("moment ledger is empty or inconsistent");
    }
    int previous = 0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      if (lambdas[i] <= previous) {
        throw std::invalid_argument(
            "ledger lambda orders must be positive and strictly increasing");
      }
      if (!std::isfinite(log_moments[i]) || log_moments[i] < 0.0) {
        throw std::invalid_argument(
            "ledger log-moments must be finite and non-negative");
      }
      previous = lambdas[i];
    }
    if (steps_composed < 1) {
      throw std::invalid_argument("ledger must compose at least one step");
    }
  }
};

inline moment_ledger subsampled_gaussian_ledger(double q, double sigma,
                                                long steps,
                                                int max_lambda = 64) {
  if (steps < 1) throw std::invalid_argument("steps must be at least 1");
  if (max_lambda < 1) {
    throw std::invalid_argument("max_lambda must be at least 1");
  }
  moment_ledger ledger;
  ledger.steps_composed = steps;
  ledger.lambdas.reserve(static_cast<std::size_t>(max_lambda));
  ledger.log_moments.reserve(static_cast<std::size_t>(max_lambda));
  for (int lambda = 1; lambda <= max_lambda; ++lambda) {
    ledger.lambdas.push_back(lambda);
    ledger.log_moments.push_back(log_moment_subsampled_gaussian(q, sigma,
                                                                lambda));
  }
  return ledger;
}

// Tail-bound conversion of composed log-moments:
//   epsilon = min_lambda (steps * alpha(lambda) + ln(1/delta)) / lambda.
inline double accountant_epsilon(const moment_ledger& ledger, double delta) {
  ledger.validate();
  detail::check_delta(delta, "delta");
  const double log_inv_delta = std::log(1.0 / delta);
  const double steps = static_cast<double>(ledger.steps_composed);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ledger.lambdas.size(); ++i) {
    const double candidate =
        (steps * ledger.log_moments[i] + log_inv_delta) /
        static_cast<double>(ledger.lambdas[i]);
    best = std::min(best, candidate);
  }
  return best;
}

// Bounded-adjacency epsilon of a full optimizer run via the moments
// accountant. The released noise has std 2 c sigma while one example's
// contribution moves the sum by at most c under add/remove adjacency, so the
// unbounded mechanism is a subsampled Gaussian with effective multiplier
// 2 sigma. A replacement can be split into a removal and an addition, each
// (eps_u, delta/2)-DP, giving (2 eps_u, delta) under bounded adjacency.
inline privacy_budget bounded_dp_epsilon(const mechanism_params& params,
                                         double delta) {
  params.validate();
  detail::check_delta(delta, "delta");
  const moment_ledger ledger = subsampled_gaussian_ledger(
      params.sampling_ratio, 2.0 * params.noise_multiplier, params.steps);
  const double eps_unbounded = accountant_epsilon(ledger, delta / 2.0);
  return privacy_budget{2.0 * eps_unbounded, delta, adjacency::bounded};
}

// Classical composition chain for the same run, used as the baseline the
// moments accountant is compared against. The total failure probability
// delta_total is split half to the composition slack and half across the
// steps' per-release deltas:
//   delta' = delta_total / 2,  delta_0 = delta_total / (2 T q).
// Each release is a Gaussian mechanism with sensitivity 2c and noise
// 2 c sigma, hence per-release epsilon_0 = sqrt(2 ln(1.25/delta_0)) / sigma
// under bounded adjacency; that budget is amplified by q and composed T
// times with the strong composition theorem.
inline privacy_budget advanced_pipeline_epsilon(const mechanism_params& params,
                                                double delta_total) {
  params.validate();
  detail::check_delta(delta_total, "delta_total");
  const double steps = static_cast<double>(params.steps);
  const double q = params.sampling_ratio;
  const double delta_prime = delta_total / 2.0;
  const double delta_0 = delta_total / (2.0 * steps * q);
  if (delta_0 >= 1.0) {
    throw std::invalid_argument(
        "per-step delta is not in (0, 1); increase steps * q or lower delta");
  }
  const double eps_0 =
      std::sqrt(2.0 * std::log(1.25 / delta_0)) / params.noise_multiplier;
  const privacy_budget per_step{eps_0, delta_0, adjacency::bounded};
  const privacy_budget amplified = amplify_by_subsampling(per_step, q);
  return advanced_composition(amplified.epsilon, amplified.delta, params.steps,
                              delta_prime, adjacency::bounded);
}

enum class accounting_method { moments, advanced };

inline const char* accounting_method_name(accounting_method m) {
  return m == accounting_method::moments ? "moments" : "advanced";
}

// Bounded-adjacency epsilon of a run under either accounting method, with
// clip-independent parameters (the guarantees depend only on q, sigma, T).
inline double accounted_epsilon(accounting_method method, double sigma,
                                double q, long steps, double delta) {
  mechanism_params params;
  params.noise_multiplier = sigma;
  params.clip = 1.0;
  params.sampling_ratio = q;
  params.steps = steps;
  params.dataset_size =
      std::max<long>(1, static_cast<long>(std::ceil(1.0 / q)));
  return method == accounting_method::moments
             ? bounded_dp_epsilon(params, delta).epsilon
             : advanced_pipeline_epsilon(params, delta).epsilon;
}

// Smallest noise multiplier whose accounted epsilon stays at or below
// epsilon_target, found by exponential bracketing plus bisection. Epsilon is
// monotone decreasing in sigma for both methods. Throws calibration_error
// when even sigma_cap cannot meet the target.
inline double calibrate_sigma_for_budget(double epsilon_target, double delta,
                                         double q, long steps,
                                         accounting_method method,
                                         double rel_tol = 1e-4,
                                         double sigma_cap = 1e6) {
  if (!(epsilon_target > 0.0)) {
    throw std::invalid_argument("epsilon_target must be positive");
  }
  detail::check_delta(delta, "delta");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
  const auto epsilon_at = [&](double sigma) {
    return accounted_epsilon(method, sigma, q, steps, delta);
  };

  double hi = 1.0;
  double lo = 0.0;
  if (epsilon_at(hi) > epsilon_target) {
    // Walk up until the target is met or the cap is reached.
    while (true) {
      lo = hi;
      hi = std::min(hi * 2.0, sigma_cap);
      if (epsilon_at(hi) <= epsilon_target) break;
      if (hi >= sigma_cap) {
        throw calibration_error(
            "privacy budget unachievable: epsilon(sigma_cap) still exceeds "
            "the target");
      }
    }
  } else {
    // Already satisfied at sigma = 1; walk down to bracket the crossing.
    lo = hi / 2.0;
    while (lo > 1e-9 && epsilon_at(lo) <= epsilon_target) {
      hi = lo;
      lo /= 2.0;
    }
    if (!(lo > 1e-9)) return hi;
  }
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (epsilon_at(mid) <= epsilon_target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace dpvi

#endif  // DPVI_ACCOUNTING_HPP_
