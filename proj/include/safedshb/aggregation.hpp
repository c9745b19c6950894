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
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "safedshb/linalg.hpp"

namespace safedshb {

enum class AggregatorKind { kMean, kSmea, kFilter };

struct AggregatorSpec {
  AggregatorKind kind = AggregatorKind::kSmea;
  std::size_t f = 0;
  double filter_sigma0_sq = 0.0;
  double filter_eta = 1.0;
};

inline const char* to_string(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::kMean: return "mean";
    case AggregatorKind::kSmea: return "smea";
    case AggregatorKind::kFilter: return "filter";
  }
  return "?";
}

inline AggregatorKind parse_aggregator_kind(const std::string& s) {
  if (s == "mean") return AggregatorKind::kMean;
  if (s == "smea") return AggregatorKind::kSmea;
  if (s == "filter") return AggregatorKind::kFilter;
  throw std::invalid_argument("unknown aggregator '" + s + "' (expected mean|smea|filter)");
}

using IndexSet = std::vector<std::size_t>;

struct SmeaResult {
  ParamVector output;
  IndexSet chosen_subset;
  double lambda_max = 0.0;
};

struct FilterResult {
  ParamVector output;
  std::vector<double> weights;
  std::size_t iterations = 0;
  bool collapsed = false;  // every weight reached zero; output is the last valid mean
};

struct RobustnessCertificate {
  double kappa_claimed = 0.0;
  IndexSet worst_subset;
  double lhs = 0.0;  // ||candidate - mean_S||^2
  double rhs = 0.0;  // kappa * lambda_max(cov_S)
  bool holds = true;
  double worst_ratio = 0.0;  // max_S lhs/rhs; +inf when some rhs = 0 < lhs
};

namespace detail {

inline void check_inputs(std::span<const ParamVector> xs, const char* who) {
  if (xs.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
  for (const auto& x : xs)
    if (x.size() != xs.front().size())
      throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

inline void check_f(std::size_t n, std::size_t f, const char* who) {
  if (2 * f >= n) {
    throw std::invalid_argument(std::string(who) + ": need f < n/2 (n=" + std::to_string(n) +
                                ", f=" + std::to_string(f) + ")");
  }
}

// Advances `idx` (strictly increasing, values < n) to the next combination in
// lexicographic order. Returns false after the last one.
inline bool next_combination(IndexSet& idx, std::size_t n) {
  const std::size_t k = idx.size();
  std::size_t i = k;
  while (i > 0) {
    --i;
    if (idx[i] < n - k + i) {
      ++idx[i];
      for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

inline IndexSet first_combination(std::size_t k) {
  IndexSet idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  return idx;
}

inline std::vector<ParamVector> gather(std::span<const ParamVector> xs, const IndexSet& idx) {
  std::vector<ParamVector> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(xs[i]);
  return out;
}

inline ParamVector subset_mean(std::span<const ParamVector> xs, const IndexSet& idx) {
  ParamVector m(xs.front().size());
  for (std::size_t i : idx) m += xs[i];
  m *= 1.0 / static_cast<double>(idx.size());
  return m;
}

}  // namespace detail

// Coordinate-wise arithmetic mean.
inline ParamVector aggregate_mean(std::span<const ParamVector> inputs) {
  detail::check_inputs(inputs, "aggregate_mean");
  ParamVector m(inputs.front().size());
  for (const auto& x : inputs) m += x;
  m *= 1.0 / static_cast<double>(inputs.size());
  return m;
}

// Smallest Maximum Eigenvalue Averaging: average of the size-(n-f) subset
// whose empirical covariance has the smallest top eigenvalue. Subsets are
// visited in lexicographic order and a later subset replaces the incumbent
// only when it is smaller by more than 1e-12, so ties go to the
// lexicographically smallest index set.
inline SmeaResult aggregate_smea(std::span<const ParamVector> inputs, std::size_t f) {
  detail::check_inputs(inputs, "aggregate_smea");
  const std::size_t n = inputs.size();
  detail::check_f(n, f, "aggregate_smea");
  if (f == 0) {
    return {aggregate_mean(inputs), detail::first_combination(n),
            covariance_spectrum(inputs).lambda_max};
  }

  constexpr double kTieTolerance = 1e-12;
  IndexSet idx = detail::first_combination(n - f);
  IndexSet best;
  double best_lambda = std::numeric_limits<double>::infinity();
  do {
    const auto subset = detail::gather(inputs, idx);
    const double lambda = covariance_spectrum(subset).lambda_max;
    if (lambda < best_lambda - kTieTolerance) {
      best_lambda = lambda;
      best = idx;
    }
  } while (detail::next_combination(idx, n));

  return {detail::subset_mean(inputs, best), best, best_lambda};
}

// Spectral filter. Returns the weighted mean once the top eigenvalue of the
// weighted covariance is at most eta * sigma0_sq; otherwise downweights each
// point by its squared projection on the top eigenvector. Stops early when at
// most one weight is positive and after at most n downweight rounds.
inline FilterResult aggregate_filter(std::span<const ParamVector> inputs, double sigma0_sq,
                                     double eta) {
  detail::check_inputs(inputs, "aggregate_filter");
  if (!(sigma0_sq >= 0.0)) throw std::invalid_argument("aggregate_filter: sigma0_sq must be >= 0");
  if (!(eta > 0.0)) throw std::invalid_argument("aggregate_filter: eta must be > 0");
  const std::size_t n = inputs.size();

  FilterResult result;
  result.weights.assign(n, 1.0);
  ParamVector last_mean;
  for (std::size_t round = 0;; ++round) {
    std::size_t positive = 0;
    for (double c : result.weights) positive += c > 0.0 ? 1 : 0;
    if (positive == 0) {
      result.collapsed = true;
      result.output = last_mean;
      return result;
    }

    const auto spec = covariance_spectrum(inputs, result.weights);
    last_mean = spec.mean;
    ++result.iterations;
    if (spec.lambda_max <= eta * sigma0_sq || positive <= 1 || round >= n) {
      result.output = spec.mean;
      return result;
    }

    std::vector<double> tau(n, 0.0);
    double tau_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (result.weights[i] == 0.0) continue;
      const double proj = dot(spec.eigvec, inputs[i] - spec.mean);
      tau[i] = proj * proj;
      tau_max = std::max(tau_max, tau[i]);
    }
    if (tau_max == 0.0) {
      result.output = spec.mean;
      return result;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (result.weights[i] == 0.0) continue;
      // The argmax gets exactly zero, so every round removes a point.
      result.weights[i] = tau[i] == tau_max ? 0.0 : result.weights[i] * (1.0 - tau[i] / tau_max);
    }
  }
}

// Robustness coefficient of SMEA: (4f/(n-f)) (1 + f/(n-2f))^2.
inline double kappa_smea(std::size_t n, std::size_t f) {
  detail::check_f(n, f, "kappa_smea");
  const double nd = static_cast<double>(n);
  const double fd = static_cast<double>(f);
  const double g = 1.0 + fd / (nd - 2.0 * fd);
  return 4.0 * fd / (nd - fd) * g * g;
}

struct FilterConstants {
  double kappa = 0.0;
  double eta = 0.0;
};

// kappa = 4fn/(n-2f)^2 + 2f/(n-f), eta = 2n(n-f)/(n-2f)^2.
inline FilterConstants kappa_filter(std::size_t n, std::size_t f) {
  detail::check_f(n, f, "kappa_filter");
  const double nd = static_cast<double>(n);
  const double fd = static_cast<double>(f);
  const double gap = nd - 2.0 * fd;
  return {4.0 * fd * nd / (gap * gap) + 2.0 * fd / (nd - fd), 2.0 * nd * (nd - fd) / (gap * gap)};
}

// Exhaustive check of the (f, kappa)-robust averaging inequality for one
// candidate output over every subset of size n - f.
inline RobustnessCertificate check_robust_averaging(std::span<const ParamVector> inputs,
                                                    std::size_t f, double kappa,
                                                    const ParamVector& candidate) {
  detail::check_inputs(inputs, "check_robust_averaging");
  const std::size_t n = inputs.size();
  if (n > 16) throw std::invalid_argument("check_robust_averaging: n > 16 is too large to enumerate");
  detail::check_f(n, f, "check_robust_averaging");
  if (!(kappa >= 0.0)) throw std::invalid_argument("check_robust_averaging: kappa must be >= 0");
  if (candidate.size() != inputs.front().size())
    throw std::invalid_argument("check_robust_averaging: candidate dimension mismatch");

  constexpr double kSlack = 1e-9;
  RobustnessCertificate cert;
  cert.kappa_claimed = kappa;
  double worst_margin = -std::numeric_limits<double>::infinity();
  IndexSet idx = detail::first_combination(n - f);
  do {
    const auto subset = detail::gather(inputs, idx);
    const auto spec = covariance_spectrum(subset);
    const double lhs = squared_distance(candidate, detail::subset_mean(inputs, idx));
    const double rhs = kappa * spec.lambda_max;
    const double margin = lhs - rhs * (1.0 + kSlack);
    if (margin > worst_margin) {
      worst_margin = margin;
      cert.worst_subset = idx;
      cert.lhs = lhs;
      cert.rhs = rhs;
    }
    const double ratio = rhs > 0.0 ? lhs / rhs
                         : lhs > 0.0 ? std::numeric_limits<double>::infinity()
                                     : 0.0;
    cert.worst_ratio = std::max(cert.worst_ratio, ratio);
  } while (detail::next_combination(idx, n));
  cert.holds = worst_margin <= 0.0;
  return cert;
}

// Dispatches on the spec; used by the engine and by attack simulations.
inline ParamVector aggregate(const AggregatorSpec& spec, std::span<const ParamVector> inputs) {
  switch (spec.kind) {
    case AggregatorKind::kMean: return aggregate_mean(inputs);
    case AggregatorKind::kSmea: return aggregate_smea(inputs, spec.f).output;
    case AggregatorKind::kFilter:
      return aggregate_filter(inputs, spec.filter_sigma0_sq, spec.filter_eta).output;
  }
  throw std::logic_error("aggregate: unknown kind");
}

}  // namespace safedshb
