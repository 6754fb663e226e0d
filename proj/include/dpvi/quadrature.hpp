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

#ifndef DPVI_QUADRATURE_HPP_
#define DPVI_QUADRATURE_HPP_

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dpvi {

class integration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Nodes and weights of the 15-point Kronrod extension of the 7-point Gauss
// rule on [-1, 1]. Nodes are symmetric; only the non-negative half is stored.
// Odd-index nodes are the embedded Gauss points.
inline constexpr double kronrod15_nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.000000000000000};
inline constexpr double kronrod15_weights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
inline constexpr double gauss7_weights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469};

// Returns {Kronrod estimate, |Kronrod - Gauss|} on [a, b]. The difference of
// the embedded rules overestimates the Kronrod error for smooth integrands,
// so accepting a panel at this estimate is conservative.
template <typename F>
std::pair<double, double> gauss_kronrod_panel(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double f_center = f(center);
  double kronrod = kronrod15_weights[7] * f_center;
  double gauss = gauss7_weights[3] * f_center;
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kronrod15_nodes[j];
    const double pair_sum = f(center - dx) + f(center + dx);
    kronrod += kronrod15_weights[j] * pair_sum;
    if (j % 2 == 1) gauss += gauss7_weights[(j - 1) / 2] * pair_sum;
  }
  kronrod *= half;
  gauss *= half;
  return {kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over [a, b] to absolute tolerance
// abs_tol. The interval starts out split into initial_panels equal panels so
// that a feature far narrower than the whole interval still lands near a
// quadrature node; panels are then bisected until the local error estimate
// fits within the local share of the tolerance (halved at each split, so the
// accepted panels sum to at most abs_tol). Throws integration_error when the
// panel budget is exhausted or an interval collapses to machine width before
// converging.
template <typename F>
double integrate_adaptive(const F& f, double a, double b, double abs_tol,
                          int max_panels = 20000, int initial_panels = 16) {
  struct interval {
    double a, b, tol;
  };
  if (a == b) return 0.0;
  std::vector<interval> pending;
  const double width = b - a;
  double left = a;
  for (int i = 1; i <= initial_panels; ++i) {
    const double right = i == initial_panels
                             ? b
                             : a + width * static_cast<double>(i) /
                                       static_cast<double>(initial_panels);
    if (right != left) pending.push_back({left, right, abs_tol / initial_panels});
    left = right;
  }
  double total = 0.0;
  int panels = 0;
  while (!pending.empty()) {
    const interval iv = pending.back();
    pending.pop_back();
    if (++panels > max_panels) {
      throw integration_error("adaptive quadrature exceeded its panel budget");
    }
    const auto [value, err] = detail::gauss_kronrod_panel(f, iv.a, iv.b);
    if (err <= iv.tol || err <= 1e-14 * std::abs(value)) {
      total += value;
      continue;
    }
    const double mid = 0.5 * (iv.a + iv.b);
    if (!(mid > iv.a && mid < iv.b)) {
      throw integration_error(
          "quadrature interval collapsed before reaching tolerance");
    }
    pending.push_back({iv.a, mid, 0.5 * iv.tol});
    pending.push_back({mid, iv.b, 0.5 * iv.tol});
  }
  return total;
}

}  // namespace dpvi

#endif  // DPVI_QUADRATURE_HPP_
