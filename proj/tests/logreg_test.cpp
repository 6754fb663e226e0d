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

#include "dpvi/logreg.hpp"

#include <cmath>
#include <random>

#include <Eigen/Core>
#include <gtest/gtest.h>

#include "dpvi/rng.hpp"
#include "test_util.hpp"

namespace {

Eigen::VectorXd make_vector(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (const double x : values) v[i++] = x;
  return v;
}

TEST(Log1pExp, KnownValuesAndStability) {
  EXPECT_DOUBLE_EQ(dpvi::log1p_exp(0.0), std::log(2.0));
  EXPECT_DOUBLE_EQ(dpvi::log1p_exp(1000.0), 1000.0);
  EXPECT_GT(dpvi::log1p_exp(-745.0), 0.0);
  // ln(1+e^t) - ln(1+e^-t) = t for all t.
  for (const double t : {-30.0, -2.0, 0.3, 5.0, 40.0}) {
    EXPECT_NEAR(dpvi::log1p_exp(t) - dpvi::log1p_exp(-t), t, 1e-12);
  }
}

TEST(Sigmoid, KnownValuesAndSymmetry) {
  EXPECT_DOUBLE_EQ(dpvi::sigmoid(0.0), 0.5);
  EXPECT_NEAR(dpvi::sigmoid(std::log(3.0)), 0.75, 1e-15);
  for (const double t : {-40.0, -1.2, 0.7, 25.0}) {
    EXPECT_NEAR(dpvi::sigmoid(t) + dpvi::sigmoid(-t), 1.0, 1e-15);
  }
  EXPECT_DOUBLE_EQ(dpvi::sigmoid(1000.0), 1.0);
  EXPECT_GE(dpvi::sigmoid(-1000.0), 0.0);
}

TEST(LogisticLogLikelihood, ValueAtDecisionBoundary) {
  const Eigen::VectorXd w = make_vector({1.0, -1.0});
  const Eigen::VectorXd x = make_vector({1.0, 1.0});
  EXPECT_DOUBLE_EQ(dpvi::logistic_log_likelihood(w, x, 1.0), -std::log(2.0));
  EXPECT_DOUBLE_EQ(dpvi::logistic_log_likelihood(w, x, -1.0), -std::log(2.0));
}

TEST(LogisticLogLikelihood, MatchesSigmoidLog) {
  const Eigen::VectorXd w = make_vector({0.8, -0.3, 1.2});
  const Eigen::VectorXd x = make_vector({1.0, 2.0, -0.5});
  const double t = w.dot(x);
  EXPECT_NEAR(dpvi::logistic_log_likelihood(w, x, 1.0),
              std::log(dpvi::sigmoid(t)), 1e-14);
  EXPECT_NEAR(dpvi::logistic_log_likelihood(w, x, -1.0),
              std::log(dpvi::sigmoid(-t)), 1e-14);
}

TEST(LogisticLogLikelihood, SaturatedMarginsStayFinite) {
  const Eigen::VectorXd w = make_vector({500.0});
  const Eigen::VectorXd x = make_vector({1.0});
  EXPECT_NEAR(dpvi::logistic_log_likelihood(w, x, 1.0), 0.0, 1e-200);
  EXPECT_DOUBLE_EQ(dpvi::logistic_log_likelihood(w, x, -1.0), -500.0);
}

TEST(LogisticLogLikelihood, RejectsBadLabels) {
  const Eigen::VectorXd w = make_vector({1.0});
  const Eigen::VectorXd x = make_vector({1.0});
  EXPECT_THROW(dpvi::logistic_log_likelihood(w, x, 0.0), std::invalid_argument);
  EXPECT_THROW(dpvi::logistic_log_likelihood(w, x, 2.0), std::invalid_argument);
  EXPECT_THROW(dpvi::logistic_log_likelihood_grad(w, x, 0.5),
               std::invalid_argument);
  EXPECT_THROW(
      dpvi::logistic_log_likelihood(w, make_vector({1.0, 2.0}), 1.0),
      std::invalid_argument);
}

TEST(LogisticLogLikelihoodGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(dpvi::uniform_unit(rng) * 5.0);
    Eigen::VectorXd w(d);
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) {
      w[j] = dpvi::standard_normal(rng);
      x[j] = dpvi::standard_normal(rng);
    }
    const double y = dpvi::uniform_unit(rng) < 0.5 ? -1.0 : 1.0;
    const Eigen::VectorXd analytic =
        dpvi::logistic_log_likelihood_grad(w, x, y);
    const Eigen::VectorXd fd = dpvi_test::central_difference(
        [&](const Eigen::VectorXd& point) {
          return dpvi::logistic_log_likelihood(point, x, y);
        },
        w);
    EXPECT_LT(dpvi_test::max_relative_error(analytic, fd), 1e-7)
        << "trial " << trial;
  }
}

// ln sigmoid(y w.x) is concave in w, so second differences along any
// direction must be non-positive.
TEST(LogisticLogLikelihood, ConcaveAlongRandomDirections) {
  std::mt19937_64 rng(42);
  const Eigen::VectorXd x = make_vector({1.0, -0.7, 0.4});
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd w(3), direction(3);
    for (int j = 0; j < 3; ++j) {
      w[j] = dpvi::standard_normal(rng);
      direction[j] = dpvi::standard_normal(rng);
    }
    const double y = trial % 2 == 0 ? 1.0 : -1.0;
    const double h = 0.05;
    const double lo = dpvi::logistic_log_likelihood(w - h * direction, x, y);
    const double mid = dpvi::logistic_log_likelihood(w, x, y);
    const double hi = dpvi::logistic_log_likelihood(w + h * direction, x, y);
    EXPECT_LE(lo + hi - 2.0 * mid, 1e-12);
  }
}

TEST(LogisticRegressionModel, PriorValueAndGradient) {
  const Eigen::VectorXd mean = make_vector({0.5, -1.0});
  const Eigen::VectorXd var = make_vector({2.0, 0.5});
  const dpvi::logistic_regression model(mean, var);

  // At the prior mean only the normalizer remains.
  const double at_mean = model.log_prior(mean);
  EXPECT_NEAR(at_mean,
              -0.5 * std::log(2.0 * std::numbers::pi * 2.0) -
                  0.5 * std::log(2.0 * std::numbers::pi * 0.5),
              1e-14);

  const Eigen::VectorXd theta = make_vector({1.5, 0.5});
  const Eigen::VectorXd fd = dpvi_test::central_difference(
      [&](const Eigen::VectorXd& point) { return model.log_prior(point); },
      theta);
  EXPECT_LT(dpvi_test::max_relative_error(model.log_prior_grad(theta), fd),
            1e-8);

  const auto info = model.gaussian_prior_info();
  ASSERT_TRUE(info.has_value());
  EXPECT_EQ(info->mean, mean);
  EXPECT_EQ(info->var, var);
}

TEST(LogisticRegressionModel, RejectsBadPriors) {
  EXPECT_THROW(dpvi::logistic_regression(make_vector({0.0}),
                                         make_vector({0.0})),
               std::invalid_argument);
  EXPECT_THROW(dpvi::logistic_regression(make_vector({0.0, 0.0}),
                                         make_vector({1.0})),
               std::invalid_argument);
}

TEST(PredictProbability, PointMassReducesToSigmoid) {
  auto vp = dpvi::gaussian_variational::from_blocks(
      {{"weights", 2, dpvi::transform_kind::identity}});
  vp.mean = make_vector({1.2, -0.4});
  vp.log_std.setConstant(-20.0);
  const Eigen::VectorXd x = make_vector({0.7, 1.1});
  EXPECT_NEAR(dpvi::predict_probability(vp, x),
              dpvi::sigmoid(vp.mean.dot(x)), 1e-12);
}

TEST(PredictProbability, UncertaintyShrinksTowardHalf) {
  auto vp = dpvi::gaussian_variational::from_blocks(
      {{"weights", 1, dpvi::transform_kind::identity}});
  vp.mean = make_vector({2.0});
  const Eigen::VectorXd x = make_vector({1.0});
  vp.log_std.setConstant(-10.0);
  const double confident = dpvi::predict_probability(vp, x);
  vp.log_std.setConstant(1.0);
  const double uncertain = dpvi::predict_probability(vp, x);
  EXPECT_GT(confident, uncertain);
  EXPECT_GT(uncertain, 0.5);
}

TEST(PredictProbability, ZeroMeanIsExactlyHalf) {
  auto vp = dpvi::gaussian_variational::from_blocks(
      {{"weights", 2, dpvi::transform_kind::identity}});
  vp.log_std.setConstant(0.7);
  EXPECT_DOUBLE_EQ(dpvi::predict_probability(vp, make_vector({1.0, -2.0})),
                   0.5);
}

// The probit-style approximation is known to track the Gaussian average of
// the sigmoid to within about a percent; check it against brute-force Monte
// Carlo at a few posterior shapes.
TEST(PredictProbability, TracksMonteCarloAverage) {
  std::mt19937_64 rng(43);
  const Eigen::VectorXd x = make_vector({1.0, -0.5, 0.25});
  const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> cases{
      {make_vector({0.5, 0.2, -0.3}), make_vector({-1.0, -1.0, -1.0})},
      {make_vector({1.5, -1.0, 0.8}), make_vector({0.0, -0.5, 0.3})},
      {make_vector({-0.7, 0.4, 0.1}), make_vector({0.5, 0.5, 0.5})},
  };
  for (const auto& [mean, log_std] : cases) {
    auto vp = dpvi::gaussian_variational::from_blocks(
        {{"weights", 3, dpvi::transform_kind::identity}});
    vp.mean = mean;
    vp.log_std = log_std;
    double total = 0.0;
    const int draws = 100000;
    for (int s = 0; s < draws; ++s) {
      double dot = 0.0;
      for (Eigen::Index j = 0; j < 3; ++j) {
        dot += (mean[j] +
                std::exp(log_std[j]) * dpvi::standard_normal(rng)) * x[j];
      }
      total += dpvi::sigmoid(dot);
    }
    EXPECT_NEAR(dpvi::predict_probability(vp, x), total / draws, 0.01);
  }
}

TEST(ClassificationAccuracy, CountsThresholdedMatches) {
  auto vp = dpvi::gaussian_variational::from_blocks(
      {{"weights", 1, dpvi::transform_kind::identity}});
  vp.mean = make_vector({1.0});
  vp.log_std.setConstant(-1.0);

  dpvi::dataset data;
  data.features.resize(4, 1);
  data.features << 2.0, -1.0, 3.0, -0.5;
  data.labels.resize(4);
  data.labels << 1.0, -1.0, -1.0, 1.0;
  // Predictions by sign of x: +, -, +, -. Labels match on the first two.
  EXPECT_DOUBLE_EQ(dpvi::classification_accuracy(vp, data), 0.5);

  data.labels << 1.0, -1.0, 1.0, -1.0;
  EXPECT_DOUBLE_EQ(dpvi::classification_accuracy(vp, data), 1.0);
}

TEST(ClassificationAccuracy, TieCountsAsPositive) {
  auto vp = dpvi::gaussian_variational::from_blocks(
      {{"weights", 1, dpvi::transform_kind::identity}});
  dpvi::dataset data;
  data.features.resize(1, 1);
  data.features << 0.0;  // probability exactly one half
  data.labels.resize(1);
  data.labels << 1.0;
  EXPECT_DOUBLE_EQ(dpvi::classification_accuracy(vp, data), 1.0);
  data.labels << -1.0;
  EXPECT_DOUBLE_EQ(dpvi::classification_accuracy(vp, data), 0.0);
}

TEST(ClassificationAccuracy, RejectsUnlabelledOrEmptyData) {
  const auto vp = dpvi::gaussian_variational::from_blocks(
      {{"weights", 1, dpvi::transform_kind::identity}});
  dpvi::dataset unlabelled;
  unlabelled.features.resize(2, 1);
  unlabelled.features << 1.0, 2.0;
  EXPECT_THROW(dpvi::classification_accuracy(vp, unlabelled),
               std::invalid_argument);
}

}  // namespace
