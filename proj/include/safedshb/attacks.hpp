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

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "safedshb/aggregation.hpp"
#include "safedshb/linalg.hpp"
#include "safedshb/model.hpp"

namespace safedshb {

enum class AttackKind { kNone, kAlie, kFoe, kSf, kLf };

// How a Byzantine worker turns its attack vector B_t into the message the
// server sees: B_t itself, or a momentum recursion fed with B_t.
enum class AttackMessage { kRaw, kMomentum };

inline const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kNone: return "none";
    case AttackKind::kAlie: return "alie";
    case AttackKind::kFoe: return "foe";
    case AttackKind::kSf: return "sf";
    case AttackKind::kLf: return "lf";
  }
  return "?";
}

inline AttackKind parse_attack_kind(const std::string& s) {
  if (s == "none") return AttackKind::kNone;
  if (s == "alie") return AttackKind::kAlie;
  if (s == "foe") return AttackKind::kFoe;
  if (s == "sf") return AttackKind::kSf;
  if (s == "lf") return AttackKind::kLf;
  throw std::invalid_argument("unknown attack '" + s + "' (expected alie|foe|sf|lf|none)");
}

inline const char* to_string(AttackMessage m) { return m == AttackMessage::kRaw ? "raw" : "momentum"; }

inline AttackMessage parse_attack_message(const std::string& s) {
  if (s == "raw") return AttackMessage::kRaw;
  if (s == "momentum") return AttackMessage::kMomentum;
  throw std::invalid_argument("unknown attack_message '" + s + "' (expected raw|momentum)");
}

// {0} together with 50 log-spaced values in [0.01, 10].
inline std::vector<double> default_tau_grid() {
  std::vector<double> grid{0.0};
  constexpr int kPoints = 50;
  for (int i = 0; i < kPoints; ++i)
    grid.push_back(0.01 * std::pow(1000.0, static_cast<double>(i) / (kPoints - 1)));
  return grid;
}

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  std::vector<double> tau_grid = default_tau_grid();
  AttackMessage message = AttackMessage::kMomentum;
};

// What an omniscient adversary sees in one step: the honest clipped gradients
// (before noise) and the honest messages the server will aggregate.
struct AttackContext {
  std::span<const ParamVector> honest_gradients;
  std::span<const ParamVector> honest_messages;
  AggregatorSpec aggregator;
  std::size_t f = 0;
  // Maps a candidate B_t to the message each Byzantine worker would send.
  std::function<ParamVector(const ParamVector&)> message_of = [](const ParamVector& b) { return b; };
};

struct AttackChoice {
  ParamVector vector;  // B_t
  double tau = 0.0;
  double displacement = 0.0;  // || F(messages) - mean honest gradient ||
};

namespace detail {

inline ParamVector honest_mean_gradient(const AttackContext& ctx, const char* who) {
  if (ctx.honest_gradients.empty()) throw std::invalid_argument(std::string(who) + ": empty honest set");
  return aggregate_mean(ctx.honest_gradients);
}

inline double simulated_displacement(const AttackContext& ctx, const ParamVector& candidate,
                                     const ParamVector& g_bar) {
  std::vector<ParamVector> inputs(ctx.honest_messages.begin(), ctx.honest_messages.end());
  const ParamVector msg = ctx.message_of(candidate);
  for (std::size_t k = 0; k < ctx.f; ++k) inputs.push_back(msg);
  return norm(aggregate(ctx.aggregator, inputs) - g_bar);
}

// B(tau) = g_bar + tau * direction, scored by simulating the server. Grid is
// scanned in increasing tau and only a strictly larger displacement replaces
// the incumbent, so ties go to the smallest tau.
inline AttackChoice grid_search(const AttackContext& ctx, std::span<const double> grid,
                                const ParamVector& g_bar, const ParamVector& direction,
                                const char* who) {
  if (grid.empty()) throw std::invalid_argument(std::string(who) + ": empty tau grid");
  std::vector<double> taus(grid.begin(), grid.end());
  std::sort(taus.begin(), taus.end());
  AttackChoice best{{}, 0.0, -1.0};
  for (double tau : taus) {
    ParamVector candidate = g_bar;
    candidate.axpy(tau, direction);
    const double score = simulated_displacement(ctx, candidate, g_bar);
    if (score > best.displacement) best = {std::move(candidate), tau, score};
  }
  return best;
}

}  // namespace detail

// Sign flipping: B_t = -g_bar.
inline ParamVector attack_sf(const AttackContext& ctx) {
  ParamVector g_bar = detail::honest_mean_gradient(ctx, "attack_sf");
  return -1.0 * g_bar;
}

// Fall of empires: B_t = (1 - tau) g_bar with tau chosen by grid search.
inline AttackChoice attack_foe(const AttackContext& ctx, std::span<const double> tau_grid) {
  const ParamVector g_bar = detail::honest_mean_gradient(ctx, "attack_foe");
  return detail::grid_search(ctx, tau_grid, g_bar, -1.0 * g_bar, "attack_foe");
}

// A little is enough: B_t = g_bar + tau * sigma_t, sigma_t the coordinate-wise
// population standard deviation of the honest gradients.
inline AttackChoice attack_alie(const AttackContext& ctx, std::span<const double> tau_grid) {
  if (ctx.honest_gradients.size() < 2)
    throw std::invalid_argument("attack_alie: need at least 2 honest gradients");
  const ParamVector g_bar = detail::honest_mean_gradient(ctx, "attack_alie");
  ParamVector sigma(g_bar.size());
  for (const auto& g : ctx.honest_gradients)
    for (std::size_t k = 0; k < g.size(); ++k) sigma[k] += (g[k] - g_bar[k]) * (g[k] - g_bar[k]);
  const double count = static_cast<double>(ctx.honest_gradients.size());
  for (auto& s : sigma) s = std::sqrt(s / count);
  return detail::grid_search(ctx, tau_grid, g_bar, sigma, "attack_alie");
}

// l' = 1 - l for binary labels.
inline std::vector<int> flip_labels(std::span<const int> labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("flip_labels: non-binary label " + std::to_string(l));
    out.push_back(1 - l);
  }
  return out;
}

inline std::vector<Sample> flip_labels(std::span<const Sample> batch) {
  std::vector<Sample> out(batch.begin(), batch.end());
  for (auto& s : out) {
    if (s.label != 0 && s.label != 1)
      throw std::invalid_argument("flip_labels: non-binary label " + std::to_string(s.label));
    s.label = 1 - s.label;
  }
  return out;
}

}  // namespace safedshb
