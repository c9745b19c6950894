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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "safedshb/linalg.hpp"

namespace safedshb {

enum class LossKind { kLogisticBce, kQuadratic };

struct LossSpec {
  LossKind kind = LossKind::kLogisticBce;
  double l2_lambda = 1e-4;  // logistic only
};

inline const char* to_string(LossKind k) {
  return k == LossKind::kLogisticBce ? "logistic" : "quadratic";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "logistic") return LossKind::kLogisticBce;
  if (s == "quadratic") return LossKind::kQuadratic;
  throw std::invalid_argument("unknown loss '" + s + "' (expected logistic|quadratic)");
}

// A data point. For the quadratic loss `features` is the point itself and
// `label` is ignored.
struct Sample {
  ParamVector features;
  int label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

namespace detail {

inline void check_dims(const ParamVector& theta, const Sample& s, const char* who) {
  if (theta.size() != s.features.size()) {
    throw std::invalid_argument(std::string(who) + ": dimension mismatch (theta " +
                                std::to_string(theta.size()) + ", features " +
                                std::to_string(s.features.size()) + ")");
  }
}

}  // namespace detail

// Per-sample loss including the L2 term, so its gradient is grad_sample.
inline double loss_sample(const ParamVector& theta, const Sample& s, const LossSpec& loss) {
  detail::check_dims(theta, s, "loss_sample");
  if (loss.kind == LossKind::kQuadratic) return squared_distance(theta, s.features);
  const double z = dot(theta, s.features);
  return softplus(z) - static_cast<double>(s.label) * z + loss.l2_lambda * squared_norm(theta);
}

// Quadratic: 2(theta - x). Logistic: (sigmoid(<theta, x>) - y) x + 2 lambda theta.
// The L2 term sits inside the per-sample gradient and is clipped with it.
inline ParamVector grad_sample(const ParamVector& theta, const Sample& s, const LossSpec& loss) {
  detail::check_dims(theta, s, "grad_sample");
  ParamVector g(theta.size());
  if (loss.kind == LossKind::kQuadratic) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (theta[i] - s.features[i]);
  } else {
    const double residual = stable_sigmoid(dot(theta, s.features)) - static_cast<double>(s.label);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = residual * s.features[i] + 2.0 * loss.l2_lambda * theta[i];
  }
  if (!g.all_finite()) throw std::runtime_error("grad_sample: non-finite gradient");
  return g;
}

// g * min{1, C/||g||}; the zero vector is returned unchanged.
inline ParamVector clip(ParamVector g, double C) {
  if (!(C > 0.0)) throw std::invalid_argument("clip: C must be > 0");
  const double n = norm(g);
  if (n > C) g *= C / n;
  return g;
}

// Sum of vectors by pairwise (tree) reduction; the result does not depend on
// how the range would be split between threads.
inline ParamVector pairwise_sum(std::span<const ParamVector> xs) {
  if (xs.size() == 1) return xs.front();
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

// (1/b) sum_x Clip(grad(theta; x), C)
inline ParamVector minibatch_gradient(const ParamVector& theta, std::span<const Sample> batch,
                                      const LossSpec& loss, double C) {
  if (batch.empty()) throw std::invalid_argument("minibatch_gradient: empty batch");
  std::vector<ParamVector> clipped;
  clipped.reserve(batch.size());
  for (const auto& s : batch) clipped.push_back(clip(grad_sample(theta, s, loss), C));
  ParamVector g = pairwise_sum(clipped);
  g *= 1.0 / static_cast<double>(batch.size());
  return g;
}

// Gradient of the mean loss over a dataset, unclipped.
inline ParamVector full_gradient(const ParamVector& theta, std::span<const Sample> data,
                                 const LossSpec& loss) {
  if (data.empty()) throw std::invalid_argument("full_gradient: empty dataset");
  ParamVector g(theta.size());
  for (const auto& s : data) g += grad_sample(theta, s, loss);
  g *= 1.0 / static_cast<double>(data.size());
  return g;
}

struct Evaluation {
  double loss = 0.0;
  double accuracy = -1.0;  // -1 when undefined (quadratic loss)
};

// Mean loss with the L2 term counted once; logistic accuracy predicts class 1
// when the score is >= 0.
inline Evaluation full_loss_and_accuracy(const ParamVector& theta, std::span<const Sample> data,
                                         const LossSpec& loss) {
  if (data.empty()) throw std::invalid_argument("full_loss_and_accuracy: empty dataset");
  const double count = static_cast<double>(data.size());
  double total = 0.0;
  if (loss.kind == LossKind::kQuadratic) {
    for (const auto& s : data) total += squared_distance(theta, s.features);
    return {total / count, -1.0};
  }
  std::size_t correct = 0;
  for (const auto& s : data) {
    if (s.features.size() != theta.size())
      throw std::invalid_argument("full_loss_and_accuracy: dimension mismatch");
    const double z = dot(theta, s.features);
    total += softplus(z) - static_cast<double>(s.label) * z;
    correct += ((z >= 0.0) == (s.label == 1)) ? 1 : 0;
  }
  return {total / count + loss.l2_lambda * squared_norm(theta),
          static_cast<double>(correct) / count};
}

}  // namespace safedshb
