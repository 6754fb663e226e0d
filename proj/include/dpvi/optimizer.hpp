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

#ifndef DPVI_OPTIMIZER_HPP_
#define DPVI_OPTIMIZER_HPP_

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dpvi/accounting.hpp"
#include "dpvi/rng.hpp"
#include "dpvi/variational.hpp"

namespace dpvi {

enum class sampling_scheme {
  poisson,     // independent Bernoulli(q) inclusion per example
  fixed_size,  // exactly round(q n) examples without replacement
};

struct optimizer_config {
  double sampling_ratio = 1.0;
  long steps = 1000;
  double step_size = 1.0;
  double clip = std::numeric_limits<double>::infinity();
  double noise_multiplier = 0.0;  // 0 runs the optimizer without privacy
  int mc_samples = 1;
  std::uint64_t seed = 0;
  double adagrad_fuzz = 1e-8;
  sampling_scheme sampling = sampling_scheme::poisson;
  double delta = 1e-5;  // failure probability used for the trace's budgets

  void validate() const {
    if (!(sampling_ratio > 0.0) || sampling_ratio > 1.0) {
      throw std::invalid_argument("sampling_ratio must lie in (0, 1]");
    }
    if (steps < 0) throw std::invalid_argument("steps must be non-negative");
    if (!(step_size > 0.0)) {
      throw std::invalid_argument("step_size must be positive");
    }
    if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
    if (!(noise_multiplier >= 0.0)) {
      throw std::invalid_argument("noise_multiplier must be non-negative");
    }
    if (noise_multiplier > 0.0 && !std::isfinite(clip)) {
      throw std::invalid_argument(
          "a private run (noise_multiplier > 0) requires a finite clip");
    }
    if (mc_samples < 1) {
      throw std::invalid_argument("mc_samples must be at least 1");
    }
    if (!(adagrad_fuzz > 0.0)) {
      throw std::invalid_argument("adagrad_fuzz must be positive");
    }
    if (!(delta > 0.0) || delta >= 1.0) {
      throw std::invalid_argument("delta must lie in (0, 1)");
    }
  }
};

// Per-coordinate sum of squared released gradients.
struct adagrad_state {
  Eigen::VectorXd accumulator;
};

struct iteration_record {
  long iteration = 0;
  std::optional<double> elbo_estimate;
  double grad_norm_mean = 0.0;  // mean per-example norm before clipping
  double clip_fraction = 0.0;
  long batch_size = 0;
};

struct run_trace {
  std::vector<iteration_record> iterations;
  std::optional<privacy_budget> moments_budget;
  std::optional<privacy_budget> advanced_budget;
  bool non_private = false;
  bool poisson_sampling = true;
  double delta = 0.0;
};

struct dpvi_result {
  gaussian_variational posterior;
  run_trace trace;
  bool diverged = false;
  long completed_steps = 0;
};

// Indices included by independent Bernoulli(q) draws, in increasing order.
// Consumes exactly n uniforms so the stream position is data-independent.
inline std::vector<Eigen::Index> subsample(Eigen::Index n, double q,
                                           std::mt19937_64& rng) {
  if (n < 0) throw std::invalid_argument("population size must be >= 0");
  if (!(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("sampling ratio must lie in (0, 1]");
  }
  std::vector<Eigen::Index> batch;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (uniform_unit(rng) < q) batch.push_back(i);
  }
  return batch;
}

// Exactly round(q n) indices drawn without replacement (partial
// Fisher-Yates). Batch-size leakage makes this variant unsuitable for the
// subsampling argument the accountants assume; it exists for comparison runs.
inline std::vector<Eigen::Index> subsample_fixed(Eigen::Index n, double q,
                                                 std::mt19937_64& rng) {
  if (n < 0) throw std::invalid_argument("population size must be >= 0");
  if (!(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("sampling ratio must lie in (0, 1]");
  }
  const Eigen::Index m = std::min<Eigen::Index>(
      n, static_cast<Eigen::Index>(std::llround(q * static_cast<double>(n))));
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j =
        i + static_cast<Eigen::Index>(
                uniform_unit(rng) * static_cast<double>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)],
              pool[static_cast<std::size_t>(j)]);
  }
  std::vector<Eigen::Index> batch(pool.begin(), pool.begin() + m);
  std::sort(batch.begin(), batch.end());
  return batch;
}

// Rescales g onto the L2 ball of radius c: g / max(1, |g| / c).
inline Eigen::VectorXd clip_gradient(const Eigen::VectorXd& g, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("clip bound must be positive");
  const double norm = g.norm();
  const double scale = std::max(1.0, norm / c);
  return g / scale;
}

// Sum of already-clipped per-example gradients plus isotropic Gaussian noise
// with standard deviation 2 c sigma per coordinate. sigma = 0 releases the
// exact sum; the noise draw is skipped entirely so non-private runs leave the
// noise stream untouched.
inline Eigen::VectorXd perturb_sum(std::span<const Eigen::VectorXd> clipped,
                                   double c, double sigma, Eigen::Index dim,
                                   std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (dim < 1) throw std::invalid_argument("dimension must be at least 1");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(dim);
  for (const Eigen::VectorXd& g : clipped) {
    if (g.size() != dim) {
      throw std::invalid_argument("gradient dimension mismatch in batch");
    }
    total += g;
  }
  if (sigma > 0.0) {
    if (!std::isfinite(c) || !(c > 0.0)) {
      throw std::invalid_argument("noisy release requires a finite clip");
    }
    const double noise_std = 2.0 * c * sigma;
    for (Eigen::Index j = 0; j < dim; ++j) {
      total[j] += noise_std * standard_normal(rng);
    }
  }
  return total;
}

// One AdaGrad ascent step: the accumulator gains g^2 per coordinate first,
// then xi moves by eta * g / (sqrt(accumulator) + fuzz). A coordinate with
// g = 0 and an empty accumulator stays put even at fuzz = 0.
inline std::pair<adagrad_state, Eigen::VectorXd> adagrad_step(
    adagrad_state state, Eigen::VectorXd xi, const Eigen::VectorXd& g,
    double eta, double fuzz) {
  if (!(eta > 0.0)) throw std::invalid_argument("step size must be positive");
  if (!(fuzz >= 0.0)) throw std::invalid_argument("fuzz must be >= 0");
  if (state.accumulator.size() == 0) {
    state.accumulator = Eigen::VectorXd::Zero(xi.size());
  }
  if (state.accumulator.size() != xi.size() || g.size() != xi.size()) {
    throw std::invalid_argument("adagrad dimension mismatch");
  }
  state.accumulator += g.cwiseProduct(g);
  for (Eigen::Index j = 0; j < xi.size(); ++j) {
    const double denom = std::sqrt(state.accumulator[j]) + fuzz;
    if (denom > 0.0) xi[j] += eta * g[j] / denom;
  }
  return {std::move(state), std::move(xi)};
}

// Called once per iteration with the pre-clip norms, the clipped batch sum
// and the released (noised) sum. The default does nothing; tests use it to
// check the privacy-critical invariants without changing the run.
struct noop_iteration_hook {
  void operator()(long /*iteration*/, std::span<const double> /*norms*/,
                  const Eigen::VectorXd& /*clipped_sum*/,
                  const Eigen::VectorXd& /*released*/) const {}
};

// Doubly stochastic variational inference with per-example clipping and
// Gaussian sum perturbation. Each iteration:
//   1. draws a batch (Poisson subsampling by default),
//   2. draws mc_samples shared reparametrization vectors z,
//   3. clips each example's ELBO-share gradient to L2 norm c,
//   4. releases the batch sum plus N(0, (2 c sigma)^2) noise per coordinate,
//   5. applies an AdaGrad ascent step to xi = [mean; log_std].
// All randomness comes from three named streams derived from config.seed, and
// every stream is advanced by a data-independent amount per iteration, so a
// run is bit-reproducible from (model, data, vp0, config) alone. An empty
// batch still performs a pure-noise step. If an iterate stops being finite
// the run ends early with `diverged` set and the trace kept up to that point.
template <variational_model M, typename Hook = noop_iteration_hook>
dpvi_result run_dpvi(const M& model, const dataset& data,
                     gaussian_variational vp, const optimizer_config& config,
                     Hook&& hook = Hook{}) {
  config.validate();
  vp.validate();
  data.validate();
  if (data.rows() < 1) {
    throw std::invalid_argument("optimizer needs a non-empty dataset");
  }

  const Eigen::Index n = data.rows();
  const Eigen::Index d = vp.dim();
  const double n_rows = static_cast<double>(n);
  const bool private_run = config.noise_multiplier > 0.0;
  if (private_run && config.sampling_ratio * n_rows < 1.0) {
    throw std::invalid_argument(
        "private runs need sampling_ratio * n >= 1; the accountants assume "
        "an expected batch of at least one example");
  }

  std::mt19937_64 subsample_rng =
      make_stream(config.seed, rng_stream::subsampling);
  std::mt19937_64 reparam_rng = make_stream(config.seed, rng_stream::reparam);
  std::mt19937_64 noise_rng = make_stream(config.seed, rng_stream::noise);

  Eigen::VectorXd xi(2 * d);
  xi.head(d) = vp.mean;
  xi.tail(d) = vp.log_std;
  adagrad_state state{Eigen::VectorXd::Zero(2 * d)};

  dpvi_result result;
  result.trace.non_private = !private_run;
  result.trace.poisson_sampling =
      config.sampling == sampling_scheme::poisson;
  result.trace.delta = config.delta;
  result.trace.iterations.reserve(static_cast<std::size_t>(config.steps));

  std::vector<Eigen::VectorXd> zs(static_cast<std::size_t>(config.mc_samples),
                                  Eigen::VectorXd(d));
  std::vector<Eigen::VectorXd> clipped;
  std::vector<double> norms;

  for (long t = 1; t <= config.steps; ++t) {
    const std::vector<Eigen::Index> batch =
        config.sampling == sampling_scheme::poisson
            ? subsample(n, config.sampling_ratio, subsample_rng)
            : subsample_fixed(n, config.sampling_ratio, subsample_rng);
    for (Eigen::VectorXd& z : zs) {
      for (Eigen::Index j = 0; j < d; ++j) z[j] = standard_normal(reparam_rng);
    }
    const std::vector<reparam_sample> samples = draw_reparam_samples(
        vp, std::span<const Eigen::VectorXd>(zs));
    const std::span<const reparam_sample> sample_view(samples);

    // The KL share is identical for every example of the iteration.
    const Eigen::VectorXd kl_grad_shared = kl_gradient(model, vp, sample_view);
    const double kl_shared = kl_value(model, vp, sample_view);

    iteration_record record;
    record.iteration = t;
    record.batch_size = static_cast<long>(batch.size());

    clipped.clear();
    norms.clear();
    double likelihood_total = 0.0;
    long clipped_count = 0;
    for (const Eigen::Index i : batch) {
      Eigen::VectorXd g =
          likelihood_gradient_part(model, vp, data, i, sample_view) -
          kl_grad_shared / n_rows;
      likelihood_total += likelihood_value_part(model, data, i, sample_view);
      const double norm = g.norm();
      norms.push_back(norm);
      if (norm > config.clip) {
        ++clipped_count;
        g *= config.clip / norm;
      }
      clipped.push_back(std::move(g));
    }
    if (!batch.empty()) {
      record.grad_norm_mean =
          std::accumulate(norms.begin(), norms.end(), 0.0) /
          static_cast<double>(norms.size());
      record.clip_fraction = static_cast<double>(clipped_count) /
                             static_cast<double>(norms.size());
      record.elbo_estimate =
          likelihood_total * n_rows / static_cast<double>(batch.size()) -
          kl_shared;
    }

    Eigen::VectorXd clipped_sum = Eigen::VectorXd::Zero(2 * d);
    for (const Eigen::VectorXd& g : clipped) clipped_sum += g;
    Eigen::VectorXd released = clipped_sum;
    if (private_run) {
      const double noise_std = 2.0 * config.clip * config.noise_multiplier;
      for (Eigen::Index j = 0; j < 2 * d; ++j) {
        released[j] += noise_std * standard_normal(noise_rng);
      }
    }
    hook(t, std::span<const double>(norms), clipped_sum, released);
    std::tie(state, xi) = adagrad_step(std::move(state), std::move(xi),
                                       released, config.step_size,
                                       config.adagrad_fuzz);
    vp.mean = xi.head(d);
    vp.log_std = xi.tail(d);
    result.trace.iterations.push_back(record);
    result.completed_steps = t;
    if (!xi.allFinite()) {
      result.diverged = true;
      break;
    }
  }

  if (private_run && result.completed_steps > 0) {
    mechanism_params params;
    params.noise_multiplier = config.noise_multiplier;
    params.clip = config.clip;
    params.sampling_ratio = config.sampling_ratio;
    params.steps = result.completed_steps;
    params.dataset_size = n;
    result.trace.moments_budget = bounded_dp_epsilon(params, config.delta);
    try {
      result.trace.advanced_budget =
          advanced_pipeline_epsilon(params, config.delta);
    } catch (const std::invalid_argument&) {
      // The classical chain's per-step delta split can be infeasible (for
      // example q <= delta_0); the moments budget still stands on its own.
      result.trace.advanced_budget = std::nullopt;
    }
  }

  result.posterior = std::move(vp);
  return result;
}

}  // namespace dpvi

#endif  // DPVI_OPTIMIZER_HPP_
