// Copyright 2026 The safe-dshb Authors
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
//
// Renyi-DP accounting for clipped, mini-batch averaged gradients released
// through the Gaussian mechanism after subsampling without replacement:
//
//   eps(a)    = Delta^2 a / (2 sigma^2)                    Gaussian base curve
//   eps'(a)   = subsampled curve at integer orders a >= 2
//   eps_1(a)  = interpolation of eps' at real orders a > 1
//   eps*      = inf_a  T eps_1(a) + log(1/delta) / (a - 1)
//
// with Delta = 2C/b and sampling ratio r = b/m.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safedshb {

struct PrivacySpec {
  double clip_C = 1.0;
  std::size_t batch_b = 25;
  std::size_t dataset_m = 1263;
  double sigma_dp = 0.08;
  std::size_t steps_T = 400;
  double delta = 1e-4;

  double sampling_ratio() const { return static_cast<double>(batch_b) / static_cast<double>(dataset_m); }
  double sensitivity() const { return 2.0 * clip_C / static_cast<double>(batch_b); }

  void validate() const {
    if (!(clip_C > 0.0)) throw std::invalid_argument("PrivacySpec: clip_C must be > 0");
    if (batch_b == 0) throw std::invalid_argument("PrivacySpec: batch_b must be >= 1");
    if (dataset_m < batch_b) throw std::invalid_argument("PrivacySpec: dataset_m must be >= batch_b");
    if (!(sigma_dp > 0.0)) throw std::invalid_argument("PrivacySpec: sigma_dp must be > 0");
    if (steps_T == 0) throw std::invalid_argument("PrivacySpec: steps_T must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("PrivacySpec: delta must lie in (0,1)");
  }
};

// An RDP curve alpha -> eps(alpha), plus its limit at alpha = infinity.
struct RdpCurve {
  std::function<double(double)> eval;
  double eps_infinity = std::numeric_limits<double>::infinity();

  double operator()(double alpha) const { return eval(alpha); }
};

inline double gaussian_rdp(double alpha, double delta_sens, double sigma) {
  if (!(alpha > 1.0)) throw std::invalid_argument("gaussian_rdp: alpha must be > 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_rdp: sigma must be > 0");
  return delta_sens * delta_sens * alpha / (2.0 * sigma * sigma);
}

inline RdpCurve gaussian_curve(double delta_sens, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_curve: sigma must be > 0");
  return {[delta_sens, sigma](double alpha) { return gaussian_rdp(alpha, delta_sens, sigma); },
          std::numeric_limits<double>::infinity()};
}

namespace detail {

inline double log_binomial(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// log(min{2, (e^{eps_inf} - 1)^j})
inline double log_min_two(double eps_inf, double j) {
  const double log_two = std::log(2.0);
  if (std::isinf(eps_inf)) return log_two;
  return std::min(log_two, j * std::log(std::expm1(eps_inf)));
}

}  // namespace detail

// Subsampled RDP at an integer order alpha >= 2:
//   (1/(a-1)) log(1 + r^2 C(a,2) min{4(e^{eps(2)}-1), e^{eps(2)} min{2,(e^{eps(inf)}-1)^2}}
//                  + sum_{j=3..a} r^j C(a,j) e^{(j-1) eps(j)} min{2,(e^{eps(inf)}-1)^j})
// Every term is formed in the log domain and reduced with log-sum-exp.
inline double subsampled_rdp_int(long alpha, double r, const RdpCurve& base) {
  if (alpha < 2) throw std::invalid_argument("subsampled_rdp_int: alpha must be an integer >= 2");
  if (!(r > 0.0 && r < 1.0)) throw std::invalid_argument("subsampled_rdp_int: r must lie in (0,1)");
  const double a = static_cast<double>(alpha);
  const double log_r = std::log(r);

  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(alpha));
  {
    const double e2 = base(2.0);
    const double left = std::log(4.0) + std::log(std::expm1(e2));  // -inf when e2 == 0
    const double right = e2 + detail::log_min_two(base.eps_infinity, 2.0);
    terms.push_back(2.0 * log_r + detail::log_binomial(a, 2.0) + std::min(left, right));
  }
  for (long j = 3; j <= alpha; ++j) {
    const double jd = static_cast<double>(j);
    terms.push_back(jd * log_r + detail::log_binomial(a, jd) + (jd - 1.0) * base(jd) +
                    detail::log_min_two(base.eps_infinity, jd));
  }

  const double top = *std::max_element(terms.begin(), terms.end());
  double log_total;
  if (top == -std::numeric_limits<double>::infinity()) {
    log_total = 0.0;
  } else if (top < 0.0) {
    double s = 0.0;
    for (double t : terms) s += std::exp(t);
    log_total = std::log1p(s);
  } else {
    double s = std::exp(-top);
    for (double t : terms) s += std::exp(t - top);
    log_total = top + std::log(s);
  }
  return std::max(0.0, log_total / (a - 1.0));
}

// Real-order subsampled RDP by interpolating the integer orders around alpha.
// `eps_int` returns the integer-order value; the floor term vanishes when
// floor(alpha) == 1.
template <class IntegerCurve>
double interpolate_rdp(double alpha, IntegerCurve&& eps_int) {
  if (!(alpha > 1.0)) throw std::invalid_argument("subsampled_rdp_real: alpha must be > 1");
  const double lo = std::floor(alpha);
  const double hi = std::ceil(alpha);
  if (lo == hi) return eps_int(static_cast<long>(lo));
  double value = 0.0;
  if (lo >= 2.0) value += (1.0 - alpha + lo) * (lo - 1.0) / (alpha - 1.0) * eps_int(static_cast<long>(lo));
  value += (alpha - lo) * (hi - 1.0) / (alpha - 1.0) * eps_int(static_cast<long>(hi));
  return value;
}

inline double subsampled_rdp_real(double alpha, double r, const RdpCurve& base) {
  return interpolate_rdp(alpha, [&](long k) { return subsampled_rdp_int(k, r, base); });
}

// Per-step RDP of one worker's release with a memo of the integer orders.
// Immutable after construction, so concurrent reads are safe.
class StepAccountant {
 public:
  static constexpr long kMaxOrder = 512;

  explicit StepAccountant(const PrivacySpec& spec) : r_(spec.sampling_ratio()) {
    spec.validate();
    base_ = gaussian_curve(spec.sensitivity(), spec.sigma_dp);
    memo_.assign(kMaxOrder + 1, 0.0);
    for (long k = 2; k <= kMaxOrder; ++k) {
      // b == m releases the full batch: no amplification.
      memo_[static_cast<std::size_t>(k)] =
          r_ < 1.0 ? subsampled_rdp_int(k, r_, base_) : base_(static_cast<double>(k));
    }
  }

  double at_integer(long k) const {
    if (k < 2 || k > kMaxOrder) throw std::out_of_range("StepAccountant: order outside [2, 512]");
    return memo_[static_cast<std::size_t>(k)];
  }

  double operator()(double alpha) const {
    if (r_ >= 1.0) return base_(alpha);
    return interpolate_rdp(alpha, [this](long k) { return at_integer(k); });
  }

 private:
  double r_;
  RdpCurve base_;
  std::vector<double> memo_;
};

struct EpsilonStar {
  double eps_star = 0.0;
  double argmin_alpha = 0.0;
};

// Minimizes T eps_1(a) + log(1/delta)/(a-1) over integer orders 2..512 and 200
// log-spaced real orders in (1, 512], then refines around the best grid point
// by golden-section search. The result is attained at a concrete order, so it
// is an upper bound on the infimum.
inline EpsilonStar compose_epsilon_star(const PrivacySpec& spec) {
  spec.validate();
  const StepAccountant step(spec);
  const double steps = static_cast<double>(spec.steps_T);
  const double log_inv_delta = std::log(1.0 / spec.delta);
  auto objective = [&](double alpha) { return steps * step(alpha) + log_inv_delta / (alpha - 1.0); };

  std::vector<double> grid;
  for (long k = 2; k <= StepAccountant::kMaxOrder; ++k) grid.push_back(static_cast<double>(k));
  constexpr int kRealOrders = 200;
  const double span = static_cast<double>(StepAccountant::kMaxOrder) - 1.0;
  for (int i = 0; i < kRealOrders; ++i) {
    const double u = static_cast<double>(i) / (kRealOrders - 1);
    grid.push_back(std::min(1.0 + 1e-2 * std::pow(span / 1e-2, u),
                            static_cast<double>(StepAccountant::kMaxOrder)));
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = objective(grid[i]);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }

  double lo = best > 0 ? grid[best - 1] : 0.5 * (1.0 + grid[0]);
  double hi = best + 1 < grid.size() ? grid[best + 1] : grid[best];
  EpsilonStar out{best_value, grid[best]};
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  for (int it = 0; it < 100 && hi - lo > 1e-10 * hi; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  for (auto [x, v] : {std::pair{x1, f1}, std::pair{x2, f2}}) {
    if (v < out.eps_star) out = {v, x};
  }
  return out;
}

// k (2C/b) max{1, b sqrt(T log(1/delta)) / (m eps)}. Requires eps <= log(1/delta).
inline double closed_form_sigma(double eps, double delta, std::size_t T, std::size_t b,
                                std::size_t m, double C, double k) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("closed_form_sigma: delta must lie in (0,1)");
  if (!(eps > 0.0)) throw std::invalid_argument("closed_form_sigma: eps must be > 0");
  if (eps > std::log(1.0 / delta)) {
    throw std::domain_error("closed_form_sigma: requires eps <= log(1/delta) (eps=" +
                            std::to_string(eps) + ", log(1/delta)=" +
                            std::to_string(std::log(1.0 / delta)) + ")");
  }
  if (!(k > 0.0)) throw std::invalid_argument("closed_form_sigma: k must be > 0");
  if (b == 0 || m == 0 || T == 0) throw std::invalid_argument("closed_form_sigma: T, b, m must be >= 1");
  if (!(C > 0.0)) throw std::invalid_argument("closed_form_sigma: C must be > 0");
  const double bd = static_cast<double>(b);
  const double ratio = bd * std::sqrt(static_cast<double>(T) * std::log(1.0 / delta)) /
                       (static_cast<double>(m) * eps);
  return k * (2.0 * C / bd) * std::max(1.0, ratio);
}

// Smallest-noise inversion of compose_epsilon_star by bisection in log(sigma)
// over [Delta/10, 1e6 Delta].
inline double calibrate_sigma(double target_eps, double delta, std::size_t T, std::size_t b,
                              std::size_t m, double C) {
  if (!(target_eps > 0.0)) throw std::invalid_argument("calibrate_sigma: target_eps must be > 0");
  PrivacySpec spec{C, b, m, 1.0, T, delta};
  const double sens = spec.sensitivity();
  auto eps_at = [&](double sigma) {
    spec.sigma_dp = sigma;
    return compose_epsilon_star(spec).eps_star;
  };
  double lo = sens / 10.0;
  double hi = 1e6 * sens;
  const double eps_lo = eps_at(lo);
  const double eps_hi = eps_at(hi);
  if (target_eps > eps_lo || target_eps < eps_hi) {
    throw std::domain_error("calibrate_sigma: target eps " + std::to_string(target_eps) +
                            " unreachable within sigma in [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "] (eps range [" + std::to_string(eps_hi) +
                            ", " + std::to_string(eps_lo) + "])");
  }
  const double tolerance = 1e-3 * target_eps;
  if (std::abs(eps_lo - target_eps) <= tolerance) return lo;
  if (std::abs(eps_hi - target_eps) <= tolerance) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    const double e = eps_at(mid);
    if (std::abs(e - target_eps) <= tolerance) return mid;
    if (e > target_eps) lo = mid;
    else hi = mid;
  }
  throw std::runtime_error("calibrate_sigma: bisection did not converge");
}

}  // namespace safedshb
