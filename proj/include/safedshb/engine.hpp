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
// Simulated server/worker training loop. Each step:
//   honest worker i: sample b points without replacement, average the clipped
//     per-sample gradients (g_i), add N(0, sigma_dp^2 I) noise, update its
//     momentum m_i <- beta_t m_i + (1 - beta_t) g~_i, send m_i;
//   Byzantine workers send an attack message (or run the honest protocol on
//     flipped labels for LF);
//   server: R_t = F(messages), theta_{t+1} = theta_t - gamma_t R_t.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "safedshb/aggregation.hpp"
#include "safedshb/attacks.hpp"
#include "safedshb/data.hpp"
#include "safedshb/linalg.hpp"
#include "safedshb/model.hpp"
#include "safedshb/privacy.hpp"
#include "safedshb/rng.hpp"

namespace safedshb {

// ---------------------------------------------------------------------------
// Learning-rate and momentum schedules

enum class ScheduleKind { kConstant, kStronglyConvex, kNonConvex };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kStronglyConvex: return "strongly_convex";
    case ScheduleKind::kNonConvex: return "nonconvex";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::kConstant;
  if (s == "strongly_convex") return ScheduleKind::kStronglyConvex;
  if (s == "nonconvex") return ScheduleKind::kNonConvex;
  throw std::invalid_argument("unknown schedule '" + s + "' (expected constant|strongly_convex|nonconvex)");
}

inline constexpr double kA1 = 240.0;
inline constexpr double kA3 = 5760.0;
inline constexpr double kA4 = 270.0;

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kConstant;
  double gamma = 1.0;  // constant
  double beta = 0.99;  // constant
  double mu = 0.0;     // strongly convex
  double L = 0.0;      // strongly convex, nonconvex
  double sigma_bar = 0.0;  // nonconvex: noise level estimate
  double L0 = 0.0;         // nonconvex: initial suboptimality estimate
  std::size_t T = 0;       // nonconvex
};

class Schedule {
 public:
  explicit Schedule(ScheduleSpec spec) : spec_(spec) {
    switch (spec_.kind) {
      case ScheduleKind::kConstant:
        if (!(spec_.gamma > 0.0)) throw std::invalid_argument("schedule: gamma must be > 0");
        if (!(spec_.beta >= 0.0 && spec_.beta < 1.0))
          throw std::invalid_argument("schedule: beta must lie in [0,1)");
        break;
      case ScheduleKind::kStronglyConvex:
        if (!(spec_.mu > 0.0 && spec_.L > 0.0))
          throw std::invalid_argument("schedule: strongly_convex needs mu > 0 and L > 0");
        if (spec_.mu > spec_.L) throw std::invalid_argument("schedule: need mu <= L");
        break;
      case ScheduleKind::kNonConvex: {
        if (!(spec_.L > 0.0 && spec_.sigma_bar > 0.0 && spec_.L0 > 0.0 && spec_.T > 0))
          throw std::invalid_argument("schedule: nonconvex needs L, sigma_bar, L0 > 0 and T >= 1");
        const double T = static_cast<double>(spec_.T);
        constant_gamma_ = std::min(1.0 / (24.0 * spec_.L),
                                   std::sqrt(kA4 * spec_.L0) /
                                       (2.0 * spec_.sigma_bar * std::sqrt(kA3 * spec_.L * T)));
        break;
      }
    }
  }

  double gamma(std::size_t t) const {
    switch (spec_.kind) {
      case ScheduleKind::kConstant: return spec_.gamma;
      case ScheduleKind::kStronglyConvex:
        return 10.0 / (spec_.mu * (static_cast<double>(t) + kA1 * spec_.L / spec_.mu));
      case ScheduleKind::kNonConvex: return constant_gamma_;
    }
    return 0.0;
  }

  double beta(std::size_t t) const {
    if (spec_.kind == ScheduleKind::kConstant) return spec_.beta;
    return std::max(0.0, 1.0 - 24.0 * spec_.L * gamma(t));
  }

  const ScheduleSpec& spec() const noexcept { return spec_; }

 private:
  ScheduleSpec spec_;
  double constant_gamma_ = 0.0;
};

// sigma_bar for the nonconvex schedule:
//   (s_b^2 + d s_dp^2)/(n-f) + 4 kappa (s_b^2 + 36 s_dp^2 (1 + d/(n-f))),
//   s_b^2 = 2 (1 - b/m) sigma^2 / b.
inline double nonconvex_sigma_bar(double sigma_sq, std::size_t b, std::size_t m, double sigma_dp,
                                  std::size_t d, std::size_t n, std::size_t f, double kappa) {
  const double sb2 = 2.0 * (1.0 - static_cast<double>(b) / static_cast<double>(m)) * sigma_sq /
                     static_cast<double>(b);
  const double honest = static_cast<double>(n - f);
  const double dd = static_cast<double>(d);
  const double sdp2 = sigma_dp * sigma_dp;
  return std::sqrt((sb2 + dd * sdp2) / honest + 4.0 * kappa * (sb2 + 36.0 * sdp2 * (1.0 + dd / honest)));
}

// ---------------------------------------------------------------------------
// Diagnostics

// Top eigenvalue of the honest momentums' empirical covariance.
inline double drift_metric(std::span<const ParamVector> honest_momentums) {
  return covariance_spectrum(honest_momentums).lambda_max;
}

// Mean of the per-worker full-data gradient of L_H. With clip_C > 0 and any
// per-sample gradient above clip_C, every per-sample gradient is clipped so the
// reference matches the workers' estimator.
inline ParamVector honest_reference_gradient(const ParamVector& theta,
                                             std::span<const std::vector<Sample>> honest_datasets,
                                             const LossSpec& loss, double clip_C = 0.0) {
  if (honest_datasets.empty()) throw std::invalid_argument("honest_reference_gradient: no datasets");
  bool clip_needed = false;
  std::vector<std::vector<ParamVector>> grads(honest_datasets.size());
  for (std::size_t i = 0; i < honest_datasets.size(); ++i) {
    if (honest_datasets[i].empty()) throw std::invalid_argument("honest_reference_gradient: empty dataset");
    for (const auto& s : honest_datasets[i]) {
      grads[i].push_back(grad_sample(theta, s, loss));
      if (clip_C > 0.0 && norm(grads[i].back()) > clip_C) clip_needed = true;
    }
  }
  ParamVector total(theta.size());
  for (auto& per_worker : grads) {
    ParamVector g(theta.size());
    for (auto& v : per_worker) g += clip_needed ? clip(std::move(v), clip_C) : v;
    g *= 1.0 / static_cast<double>(per_worker.size());
    total += g;
  }
  total *= 1.0 / static_cast<double>(honest_datasets.size());
  return total;
}

// ||mean(momentums) - grad L_H(theta)||^2
inline double deviation_metric(std::span<const ParamVector> honest_momentums, const ParamVector& theta,
                               std::span<const std::vector<Sample>> honest_datasets,
                               const LossSpec& loss, double clip_C = 0.0) {
  if (honest_momentums.empty()) throw std::invalid_argument("deviation_metric: no momentums");
  return squared_distance(aggregate_mean(honest_momentums),
                          honest_reference_gradient(theta, honest_datasets, loss, clip_C));
}

inline std::vector<ParamVector> worker_gradients(const ParamVector& theta,
                                                 std::span<const std::vector<Sample>> datasets,
                                                 const LossSpec& loss) {
  if (datasets.empty()) throw std::invalid_argument("worker_gradients: no datasets");
  std::vector<ParamVector> out;
  out.reserve(datasets.size());
  for (const auto& ds : datasets) out.push_back(full_gradient(theta, ds, loss));
  return out;
}

// Top eigenvalue of the covariance of the honest full-data gradients at theta.
inline double gcov_metric(const ParamVector& theta, std::span<const std::vector<Sample>> honest_datasets,
                          const LossSpec& loss) {
  return covariance_spectrum(worker_gradients(theta, honest_datasets, loss)).lambda_max;
}

// (1/|H|) sum_i ||grad L_i(theta) - grad L_H(theta)||^2
inline double g_squared_metric(const ParamVector& theta, std::span<const std::vector<Sample>> honest_datasets,
                               const LossSpec& loss) {
  const auto grads = worker_gradients(theta, honest_datasets, loss);
  const ParamVector mean = aggregate_mean(grads);
  double s = 0.0;
  for (const auto& g : grads) s += squared_distance(g, mean);
  return s / static_cast<double>(grads.size());
}

// max_i (1/m) sum_x ||grad l(theta; x) - grad L_i(theta)||^2, a pilot estimate
// of the per-sample gradient variance.
inline double estimate_gradient_variance(const ParamVector& theta,
                                         std::span<const std::vector<Sample>> datasets,
                                         const LossSpec& loss) {
  double worst = 0.0;
  for (const auto& ds : datasets) {
    const ParamVector mean = full_gradient(theta, ds, loss);
    double s = 0.0;
    for (const auto& x : ds) s += squared_distance(grad_sample(theta, x, loss), mean);
    worst = std::max(worst, s / static_cast<double>(ds.size()));
  }
  return worst;
}

// Quadratic-loss datasets: n - f copies of {x}^m followed by f copies of
// {-x}^m, x = G / sqrt(kappa d) * 1, kappa = 16 f (n - 2f) / (n - f)^2.
inline double case3_kappa(std::size_t n, std::size_t f) {
  const double nd = static_cast<double>(n);
  const double fd = static_cast<double>(f);
  return 16.0 * fd * (nd - 2.0 * fd) / ((nd - fd) * (nd - fd));
}

inline std::vector<std::vector<Sample>> make_case3_fixture(std::size_t n, std::size_t f, double G,
                                                           std::size_t d, std::size_t m = 1) {
  if (f < 1 || 2 * f >= n) throw std::invalid_argument("make_case3_fixture: need 1 <= f < n/2");
  if (d == 0 || m == 0) throw std::invalid_argument("make_case3_fixture: need d >= 1 and m >= 1");
  const double coord = G / std::sqrt(case3_kappa(n, f) * static_cast<double>(d));
  std::vector<std::vector<Sample>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = i < n - f ? 1.0 : -1.0;
    out[i].assign(m, Sample{ParamVector(d, sign * coord), 0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration and results

struct RunConfig {
  std::size_t n = 7;
  std::size_t f = 3;
  std::size_t T = 400;
  LossSpec loss;
  AggregatorSpec aggregator;
  AttackSpec attack;
  ScheduleSpec schedule;
  double clip_C = 1.0;
  std::size_t batch_b = 25;
  double sigma_dp = 0.08;  // (2C/b) * sigma_nm
  std::uint64_t seed = 1;
  std::size_t metrics_every = 10;
  std::size_t threads = 1;
};

struct StepMetrics {
  std::size_t t = 0;
  double train_loss = 0.0;
  double test_accuracy = -1.0;
  std::optional<double> drift;
  std::optional<double> deviation;
  std::optional<double> gcov;
  double agg_error = 0.0;
  std::optional<double> chosen_tau;
};

struct RunResult {
  std::vector<StepMetrics> metrics;
  ParamVector theta_final;
  ParamVector theta_hat;
  std::optional<std::size_t> theta_hat_index;
};

class RunAborted : public std::runtime_error {
 public:
  RunAborted(std::size_t step, const std::string& what)
      : std::runtime_error("run aborted at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct WorkerState {
  std::span<const Sample> dataset;
  ParamVector momentum;
  RandomStream batch_stream;
  RandomStream noise_stream;
  bool is_adversarial = false;
};

inline constexpr std::uint64_t kServerStreamOwner = 0xFFFFFFFFull;

// One simulated training run over n in-process workers. Workers 0..n-f-1 are
// honest, the last f are Byzantine.
class Simulation {
 public:
  Simulation(RunConfig config, std::vector<std::vector<Sample>> datasets, std::vector<Sample> test,
             ParamVector theta0)
      : config_(std::move(config)),
        datasets_(std::move(datasets)),
        test_(std::move(test)),
        schedule_(config_.schedule),
        theta_(std::move(theta0)) {
    validate();
    const std::size_t honest = config_.n - config_.f;
    for (std::size_t i = 0; i < config_.n; ++i) {
      workers_.push_back({datasets_[i], ParamVector(theta_.size()),
                          RandomStream(config_.seed, i, StreamPurpose::kBatch),
                          RandomStream(config_.seed, i, StreamPurpose::kNoise), i >= honest});
    }
    honest_datasets_.assign(datasets_.begin(), datasets_.begin() + static_cast<std::ptrdiff_t>(honest));
    for (const auto& ds : honest_datasets_) honest_union_.insert(honest_union_.end(), ds.begin(), ds.end());
    adversary_momentum_ = ParamVector(theta_.size());
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const ParamVector& theta() const noexcept { return theta_; }
  const RunConfig& config() const noexcept { return config_; }
  std::span<const WorkerState> workers() const noexcept { return workers_; }

  // Executes step t and advances theta. Metrics describe the updated model
  // (loss, accuracy) and the step's messages (drift, deviation, gcov at theta_t).
  StepMetrics step(std::size_t t) {
    const std::size_t n = config_.n;
    const std::size_t honest = n - config_.f;
    const bool lf = config_.attack.kind == AttackKind::kLf || config_.attack.kind == AttackKind::kNone;
    const std::size_t protocol_workers = config_.f > 0 && lf ? n : honest;
    const double beta = schedule_.beta(t);

    std::vector<ParamVector> gradients(protocol_workers);
    std::vector<ParamVector> messages(n);
    auto run_worker = [&](std::size_t i) {
      auto& w = workers_[i];
      auto idx = sample_without_replacement(w.dataset.size(), config_.batch_b, w.batch_stream);
      std::sort(idx.begin(), idx.end());  // summation order depends on the set only
      std::vector<Sample> batch;
      batch.reserve(idx.size());
      for (std::size_t k : idx) batch.push_back(w.dataset[k]);
      if (w.is_adversarial && config_.attack.kind == AttackKind::kLf) batch = flip_labels(batch);
      gradients[i] = minibatch_gradient(theta_, batch, config_.loss, config_.clip_C);
      ParamVector noisy = gradients[i];
      if (config_.sigma_dp > 0.0)
        for (std::size_t k = 0; k < noisy.size(); ++k) noisy[k] += config_.sigma_dp * w.noise_stream.gaussian();
      w.momentum *= beta;
      w.momentum.axpy(1.0 - beta, noisy);
      messages[i] = w.momentum;
    };
    try {
      for_each_worker(protocol_workers, run_worker);
    } catch (const std::runtime_error& e) {
      throw RunAborted(t, std::string("worker failed: ") + e.what());
    }

    StepMetrics metrics;
    metrics.t = t;
    const std::span<const ParamVector> honest_grads(gradients.data(), honest);
    const std::span<const ParamVector> honest_msgs(messages.data(), honest);
    if (config_.f > 0 && !lf) {
      AggregatorSpec agg = config_.aggregator;
      AttackContext ctx{honest_grads, honest_msgs, agg, config_.f};
      if (config_.attack.message == AttackMessage::kMomentum) {
        ctx.message_of = [&](const ParamVector& b) {
          ParamVector m = beta * adversary_momentum_;
          m.axpy(1.0 - beta, b);
          return m;
        };
      }
      ParamVector attack_vector;
      switch (config_.attack.kind) {
        case AttackKind::kSf: attack_vector = attack_sf(ctx); break;
        case AttackKind::kFoe: {
          auto c = attack_foe(ctx, config_.attack.tau_grid);
          attack_vector = std::move(c.vector);
          metrics.chosen_tau = c.tau;
          break;
        }
        case AttackKind::kAlie: {
          auto c = attack_alie(ctx, config_.attack.tau_grid);
          attack_vector = std::move(c.vector);
          metrics.chosen_tau = c.tau;
          break;
        }
        default: throw std::logic_error("unexpected attack kind");
      }
      ParamVector msg = ctx.message_of(attack_vector);
      if (config_.attack.message == AttackMessage::kMomentum) adversary_momentum_ = msg;
      for (std::size_t i = honest; i < n; ++i) messages[i] = msg;
    }

    for (const auto& msg : messages)
      if (!msg.all_finite()) throw RunAborted(t, "non-finite worker message");

    ParamVector aggregated;
    try {
      aggregated = aggregate(config_.aggregator, messages);
    } catch (const std::exception& e) {
      throw RunAborted(t, std::string("aggregation failed: ") + e.what());
    }
    metrics.agg_error = squared_distance(aggregated, aggregate_mean(honest_msgs));

    const bool diagnostics = config_.metrics_every > 0 &&
                             (t % config_.metrics_every == 0 || t + 1 == config_.T);
    if (diagnostics) {
      try {
        metrics.drift = drift_metric(honest_msgs);
        metrics.deviation =
            deviation_metric(honest_msgs, theta_, honest_datasets_, config_.loss, config_.clip_C);
        metrics.gcov = gcov_metric(theta_, honest_datasets_, config_.loss);
      } catch (const std::exception& e) {
        throw RunAborted(t, std::string("diagnostics failed: ") + e.what());
      }
    }

    theta_.axpy(-schedule_.gamma(t), aggregated);
    if (!theta_.all_finite()) throw RunAborted(t, "non-finite parameters");

    const Evaluation train = full_loss_and_accuracy(theta_, honest_union_, config_.loss);
    metrics.train_loss = train.loss;
    metrics.test_accuracy =
        test_.empty() ? -1.0 : full_loss_and_accuracy(theta_, test_, config_.loss).accuracy;
    return metrics;
  }

  RunResult run() {
    RunResult result;
    std::vector<ParamVector> trajectory;
    trajectory.reserve(config_.T);
    for (std::size_t t = 0; t < config_.T; ++t) {
      trajectory.push_back(theta_);
      result.metrics.push_back(step(t));
    }
    result.theta_final = theta_;
    if (config_.T > 0) {
      RandomStream selector(config_.seed, kServerStreamOwner, StreamPurpose::kOutputSelection);
      const auto idx = static_cast<std::size_t>(selector.below(config_.T));
      result.theta_hat = trajectory[idx];
      result.theta_hat_index = idx;
    } else {
      result.theta_hat = theta_;
    }
    return result;
  }

 private:
  void validate() const {
    if (config_.n == 0) throw std::invalid_argument("RunConfig: n must be >= 1");
    if (2 * config_.f >= config_.n) throw std::invalid_argument("RunConfig: need f < n/2");
    if (datasets_.size() != config_.n)
      throw std::invalid_argument("RunConfig: expected " + std::to_string(config_.n) + " worker datasets");
    if (theta_.empty()) throw std::invalid_argument("RunConfig: empty initial model");
    for (const auto& ds : datasets_) {
      if (ds.empty()) throw std::invalid_argument("RunConfig: empty worker dataset");
      if (config_.batch_b == 0 || config_.batch_b > ds.size())
        throw std::invalid_argument("RunConfig: need 1 <= b <= m");
      for (const auto& s : ds)
        if (s.features.size() != theta_.size())
          throw std::invalid_argument("RunConfig: sample dimension differs from model dimension");
    }
    if (!(config_.clip_C > 0.0)) throw std::invalid_argument("RunConfig: clip C must be > 0");
    if (!(config_.sigma_dp >= 0.0)) throw std::invalid_argument("RunConfig: sigma_dp must be >= 0");
    if (config_.aggregator.f != config_.f && config_.aggregator.kind == AggregatorKind::kSmea)
      throw std::invalid_argument("RunConfig: aggregator f differs from run f");
  }

  template <class Fn>
  void for_each_worker(std::size_t count, Fn&& fn) {
    const std::size_t threads = std::min(std::max<std::size_t>(config_.threads, 1), count);
    if (threads <= 1) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t k = 0; k < threads; ++k) {
        pool.emplace_back([&, k] {
          try {
            for (std::size_t i = k; i < count; i += threads) fn(i);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  RunConfig config_;
  std::vector<std::vector<Sample>> datasets_;
  std::vector<Sample> test_;
  Schedule schedule_;
  ParamVector theta_;
  std::vector<WorkerState> workers_;
  std::vector<std::vector<Sample>> honest_datasets_;
  std::vector<Sample> honest_union_;
  ParamVector adversary_momentum_;
};

inline RunResult run_experiment(const RunConfig& config, std::vector<std::vector<Sample>> datasets,
                                std::vector<Sample> test, ParamVector theta0) {
  Simulation sim(config, std::move(datasets), std::move(test), std::move(theta0));
  return sim.run();
}

// One step; returns the updated model and the step's metrics.
inline std::pair<ParamVector, StepMetrics> safe_dshb_step(Simulation& sim, std::size_t t) {
  StepMetrics m = sim.step(t);
  return {sim.theta(), std::move(m)};
}

}  // namespace safedshb
