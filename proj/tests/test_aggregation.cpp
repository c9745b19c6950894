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
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "safedshb/aggregation.hpp"
#include "safedshb/instances.hpp"

using namespace safedshb;

namespace {

ParamVector scalar(double x) { return ParamVector(1, x); }

std::vector<ParamVector> scalars(std::initializer_list<double> xs) {
  std::vector<ParamVector> out;
  for (double x : xs) out.push_back(scalar(x));
  return out;
}

std::vector<double> tree_sum(const std::vector<std::vector<double>>& xs, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return xs[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  auto a = tree_sum(xs, lo, mid);
  const auto b = tree_sum(xs, mid, hi);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace

TEST(Mean, Examples) {
  EXPECT_EQ(aggregate_mean(scalars({1.0, 3.0})), scalar(2.0));
  const ParamVector v(std::vector<double>{1.5, -2.0, 7.0});
  EXPECT_EQ(aggregate_mean(std::vector<ParamVector>{v}), v);
  EXPECT_THROW(aggregate_mean(std::vector<ParamVector>{}), std::invalid_argument);
  EXPECT_THROW(aggregate_mean(std::vector<ParamVector>{ParamVector(1), ParamVector(2)}), std::invalid_argument);
}

TEST(Mean, MatchesTreeSummation) {
  std::mt19937_64 g(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = oracle::random_points(g, 7, 6, 10.0);
    auto expect = tree_sum(pts, 0, pts.size());
    const auto got = aggregate_mean(oracle::to_params(pts));
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(got[i], expect[i] / 7.0, 1e-12);
  }
}

TEST(Smea, ZeroFIsMeanExactly) {
  std::mt19937_64 g(2);
  const auto pts = oracle::to_params(oracle::random_points(g, 6, 4));
  EXPECT_EQ(aggregate_smea(pts, 0).output, aggregate_mean(pts));
}

TEST(Smea, HandEnumeration) {
  const auto r = aggregate_smea(scalars({0.0, 0.0, 10.0}), 1);
  EXPECT_EQ(r.chosen_subset, (IndexSet{0, 1}));
  EXPECT_EQ(r.output, scalar(0.0));
  EXPECT_EQ(r.lambda_max, 0.0);
}

TEST(Smea, MatchesBruteForceEnumerator) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    const std::size_t f = n == 1 ? 0 : static_cast<std::size_t>(g() % ((n + 1) / 2));
    const std::size_t d = std::vector<std::size_t>{1, 2, 5, 20}[trial % 4];
    const auto pts = oracle::to_params(oracle::random_points(g, n, d, 1.0 + trial % 5));
    const auto got = aggregate_smea(pts, f);
    const auto want = oracle::brute_force_smea(pts, f);
    ASSERT_EQ(got.chosen_subset, want.subset) << "trial " << trial;
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(got.output[i], want.output[i], 1e-12);
  }
}

TEST(Smea, PermutationInvariance) {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = oracle::to_params(oracle::random_points(g, 7, 3));
    pts[5] = pts[6] = ParamVector(3, 40.0);
    const auto base = aggregate_smea(pts, 3).output;
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    std::vector<ParamVector> shuffled;
    for (auto i : perm) shuffled.push_back(pts[i]);
    const auto out = aggregate_smea(shuffled, 3).output;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], base[i], 1e-12);
  }
}

TEST(Smea, TranslationAndScaleEquivariance) {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = oracle::to_params(oracle::random_points(g, 7, 4));
    const auto base = aggregate_smea(pts, 2);
    const ParamVector c = oracle::to_params(oracle::random_points(g, 1, 4, 100.0))[0];
    std::vector<ParamVector> moved, scaled;
    for (const auto& p : pts) {
      moved.push_back(p + c);
      scaled.push_back(3.5 * p);
    }
    const auto m = aggregate_smea(moved, 2);
    EXPECT_EQ(m.chosen_subset, base.chosen_subset);
    const auto s = aggregate_smea(scaled, 2);
    EXPECT_EQ(s.chosen_subset, base.chosen_subset);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(m.output[i], base.output[i] + c[i], 1e-10);
      EXPECT_NEAR(s.output[i], 3.5 * base.output[i], 1e-12);
    }
  }
}

TEST(Smea, Errors) {
  EXPECT_THROW(aggregate_smea(scalars({1, 2, 3, 4}), 2), std::invalid_argument);
  EXPECT_THROW(aggregate_smea(std::vector<ParamVector>{}, 0), std::invalid_argument);
}

TEST(Filter, IdenticalInputsReturnInOneIteration) {
  const std::vector<ParamVector> pts(5, ParamVector(std::vector<double>{1.0, -2.0}));
  const auto r = aggregate_filter(pts, 0.0, 1.0);
  EXPECT_EQ(r.output, pts[0]);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_FALSE(r.collapsed);
}

TEST(Filter, HandTraceOneOutlier) {
  const auto r = aggregate_filter(scalars({0.0, 0.0, 0.0, 9.0}), 0.0, 1.0);
  // Round 1: mean 2.25, tau = (5.0625, 5.0625, 5.0625, 45.5625). The outlier
  // carries tau_max and drops to weight 0; the rest keep 1 - 5.0625/45.5625.
  EXPECT_EQ(r.weights[3], 0.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.weights[i], 1.0 - 5.0625 / 45.5625, 1e-15);
  EXPECT_EQ(r.output, scalar(0.0));
  EXPECT_EQ(r.iterations, 2u);
}

TEST(Filter, TerminatesAndWeightsStayInUnitInterval) {
  std::mt19937_64 g(6);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 10;
    const auto pts = oracle::to_params(oracle::random_points(g, n, 1 + trial % 6));
    const auto r = aggregate_filter(pts, 0.0, 1.0);
    EXPECT_LE(r.iterations, n + 1);
    for (double w : r.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
    EXPECT_TRUE(r.output.all_finite());
  }
}

TEST(Filter, StopsWhenVarianceBelowThreshold) {
  const auto pts = scalars({0.0, 2.0});  // variance 1
  const auto r = aggregate_filter(pts, 1.0, 1.0);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_EQ(r.output, scalar(1.0));
}

TEST(Filter, BoundOnPlantedOutliers) {
  RandomStream s(17, 0, StreamPurpose::kInstance);
  const std::size_t n = 7, f = 3;
  const auto k = kappa_filter(n, f);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance inst = make_instance(n, f, 5, static_cast<Placement>(1 + trial % 3), s);
    const std::span<const ParamVector> clean(inst.points.data(), inst.honest);
    const auto spec = covariance_spectrum(clean);
    const auto r = aggregate_filter(inst.points, spec.lambda_max, k.eta);
    ASSERT_LE(squared_distance(r.output, spec.mean), k.kappa * spec.lambda_max) << "trial " << trial;
  }
}

TEST(Filter, Errors) {
  EXPECT_THROW(aggregate_filter(std::vector<ParamVector>{}, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(aggregate_filter(scalars({1.0}), -1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(aggregate_filter(scalars({1.0}), 0.0, 0.0), std::invalid_argument);
}

TEST(Kappa, Smea) {
  EXPECT_DOUBLE_EQ(kappa_smea(7, 3), 48.0);
  EXPECT_DOUBLE_EQ(kappa_smea(9, 0), 0.0);
  EXPECT_DOUBLE_EQ(kappa_smea(5, 1), 16.0 / 9.0);
  EXPECT_THROW(kappa_smea(6, 3), std::invalid_argument);
}

TEST(Kappa, Filter) {
  const auto a = kappa_filter(7, 3);
  EXPECT_DOUBLE_EQ(a.kappa, 85.5);
  EXPECT_DOUBLE_EQ(a.eta, 56.0);
  EXPECT_DOUBLE_EQ(kappa_filter(9, 0).kappa, 0.0);
  const auto b = kappa_filter(5, 2);
  EXPECT_DOUBLE_EQ(b.kappa, 40.0 + 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(b.eta, 30.0);
  EXPECT_THROW(kappa_filter(4, 2), std::invalid_argument);
}

TEST(Certificate, MeanWithoutAdversariesHolds) {
  std::mt19937_64 g(7);
  const auto pts = oracle::to_params(oracle::random_points(g, 6, 3));
  const auto c = check_robust_averaging(pts, 0, 0.0, aggregate_mean(pts));
  EXPECT_TRUE(c.holds);
  EXPECT_NEAR(c.lhs, 0.0, 1e-24);
}

TEST(Certificate, SmeaHoldsOnRandomDraws) {
  std::mt19937_64 g(8);
  const double kappa = kappa_smea(7, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pts = oracle::to_params(oracle::random_points(g, 7, 1 + trial % 5, 1.0 + trial % 3));
    ASSERT_TRUE(check_robust_averaging(pts, 3, kappa, aggregate_smea(pts, 3).output).holds) << "trial " << trial;
  }
}

TEST(Certificate, PlainMeanFailsWithFarPoint) {
  std::mt19937_64 g(9);
  auto pts = oracle::to_params(oracle::random_points(g, 5, 2));
  pts[4] = ParamVector(std::vector<double>{1e6, 0.0});
  const auto c = check_robust_averaging(pts, 1, kappa_smea(5, 1), aggregate_mean(pts));
  EXPECT_FALSE(c.holds);
  EXPECT_EQ(c.worst_subset, (IndexSet{0, 1, 2, 3}));
  EXPECT_GT(c.lhs, c.rhs);
}

TEST(Certificate, Guards) {
  const std::vector<ParamVector> big(17, ParamVector(1));
  EXPECT_THROW(check_robust_averaging(big, 1, 1.0, ParamVector(1)), std::invalid_argument);
  EXPECT_THROW(check_robust_averaging(scalars({1, 2, 3}), 1, -1.0, scalar(0)), std::invalid_argument);
  EXPECT_THROW(check_robust_averaging(scalars({1, 2, 3}), 2, 1.0, scalar(0)), std::invalid_argument);
}

TEST(Dispatch, FollowsSpec) {
  const auto pts = scalars({0.0, 0.0, 10.0});
  EXPECT_EQ(aggregate({AggregatorKind::kMean, 1}, pts), aggregate_mean(pts));
  EXPECT_EQ(aggregate({AggregatorKind::kSmea, 1}, pts), scalar(0.0));
  EXPECT_EQ(aggregate({AggregatorKind::kFilter, 1, 0.0, 1.0}, pts), aggregate_filter(pts, 0.0, 1.0).output);
  EXPECT_EQ(parse_aggregator_kind("filter"), AggregatorKind::kFilter);
  EXPECT_THROW(parse_aggregator_kind("krum"), std::invalid_argument);
}
