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
// safedshb run | account | certify

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "safedshb/experiment.hpp"
#include "safedshb/instances.hpp"

#ifndef SAFEDSHB_BUILD_ID
#define SAFEDSHB_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace safedshb;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct RunOptions {
  std::string config;
  std::string out;
  std::string seeds;
  std::vector<std::string> overrides;
  bool resume = false;
  bool json = false;
  std::size_t threads = 1;
  std::size_t jobs = 1;
};

int cmd_run(const RunOptions& opt) {
  ExperimentMatrix matrix;
  std::vector<PointSettings> points;
  try {
    ConfigMap cfg = load_config(opt.config);
    for (const auto& kv : opt.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opt.seeds.empty()) cfg["run.seeds"] = opt.seeds;
    matrix = expand_matrix(cfg);
    for (const auto& p : matrix.points) points.push_back(resolve_point(p));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  const std::size_t total = points.size() * matrix.seeds.size();
  std::cerr << points.size() << " config point(s) x " << matrix.seeds.size() << " seed(s) = " << total
            << " run(s)\n";

  const fs::path out_dir(opt.out);
  const fs::path runs_dir = out_dir / "runs";
  fs::create_directories(runs_dir);

  std::vector<Json> summaries(total);
  std::vector<std::string> errors(total);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  DatasetCache cache;

  auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      const auto& p = points[job / matrix.seeds.size()];
      const auto seed = matrix.seeds[job % matrix.seeds.size()];
      const std::string stem = run_stem(p.hash, seed);
      const fs::path summary_path = runs_dir / (stem + ".summary.json");
      const fs::path metrics_path = runs_dir / (stem + ".metrics.jsonl");
      if (opt.resume) {
        if (auto done = read_complete_summary(summary_path); done && fs::exists(metrics_path)) {
          summaries[job] = std::move(*done);
          std::lock_guard lock(log_mutex);
          std::cerr << "skip " << stem << " (complete)\n";
          continue;
        }
      }
      try {
        RunOutcome r = execute_run(p, seed, opt.threads, cache, SAFEDSHB_BUILD_ID);
        write_file_atomic(metrics_path, metrics_jsonl(r.result.metrics));
        write_file_atomic(summary_path, r.summary.dump(2) + "\n");
        summaries[job] = std::move(r.summary);
        std::lock_guard lock(log_mutex);
        std::cerr << "done " << stem << "\n";
      } catch (const std::exception& e) {
        errors[job] = e.what();
        std::lock_guard lock(log_mutex);
        std::cerr << "FAILED " << stem << ": " << e.what() << "\n";
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, total));
    for (std::size_t k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
  }

  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::vector<Json> done;
    for (std::size_t s = 0; s < matrix.seeds.size(); ++s)
      if (!summaries[i * matrix.seeds.size() + s].is_null()) done.push_back(summaries[i * matrix.seeds.size() + s]);
    rows.push_back(summarize_point(points[i].resolved, points[i].hash, done));
  }
  write_file_atomic(out_dir / "table.csv", table_csv(rows));

  std::size_t failed = 0;
  for (const auto& e : errors) failed += e.empty() ? 0 : 1;
  if (opt.json) {
    Json j;
    j["runs"] = Json::array();
    for (std::size_t job = 0; job < total; ++job) {
      const auto& p = points[job / matrix.seeds.size()];
      const auto seed = matrix.seeds[job % matrix.seeds.size()];
      j["runs"].push_back({{"config_hash", p.hash},
                           {"seed", seed},
                           {"status", errors[job].empty() ? "complete" : "failed"},
                           {"error", errors[job].empty() ? Json(nullptr) : Json(errors[job])},
                           {"summary", (runs_dir / (run_stem(p.hash, seed) + ".summary.json")).string()}});
    }
    j["table"] = (out_dir / "table.csv").string();
    std::cout << j.dump(2) << "\n";
  }
  if (failed > 0) {
    std::cerr << failed << " of " << total << " run(s) failed\n";
    return kExitFailure;
  }
  return 0;
}

struct AccountOptions {
  double sigma_nm = std::numeric_limits<double>::quiet_NaN();
  double sigma_dp = std::numeric_limits<double>::quiet_NaN();
  double target_eps = std::numeric_limits<double>::quiet_NaN();
  std::size_t T = 400;
  std::size_t b = 25;
  std::size_t m = 1263;
  double C = 1.0;
  double delta = 1e-4;
  bool json = false;
};

int cmd_account(const AccountOptions& opt) {
  try {
    PrivacySpec spec{opt.C, opt.b, opt.m, 0.0, opt.T, opt.delta};
    const double sens = spec.sensitivity();
    Json j;
    if (!std::isnan(opt.target_eps)) {
      const double sigma = calibrate_sigma(opt.target_eps, opt.delta, opt.T, opt.b, opt.m, opt.C);
      spec.sigma_dp = sigma;
      j["target_eps"] = opt.target_eps;
    } else if (!std::isnan(opt.sigma_dp)) {
      spec.sigma_dp = opt.sigma_dp;
    } else {
      spec.sigma_dp = sens * (std::isnan(opt.sigma_nm) ? 1.0 : opt.sigma_nm);
    }
    spec.validate();
    const EpsilonStar e = compose_epsilon_star(spec);
    j["C"] = spec.clip_C;
    j["b"] = spec.batch_b;
    j["m"] = spec.dataset_m;
    j["T"] = spec.steps_T;
    j["delta"] = spec.delta;
    j["sigma_dp"] = spec.sigma_dp;
    j["sigma_nm"] = spec.sigma_dp / sens;
    j["eps_star"] = e.eps_star;
    j["argmin_alpha"] = e.argmin_alpha;
    // Closed-form sufficient noise for the same eps*, with k = 1.
    const bool closed_ok = e.eps_star <= std::log(1.0 / spec.delta);
    const double closed = closed_ok ? closed_form_sigma(e.eps_star, spec.delta, spec.steps_T, spec.batch_b,
                                                        spec.dataset_m, spec.clip_C, 1.0)
                                    : std::numeric_limits<double>::quiet_NaN();
    j["closed_form_sigma_k1"] = finite_or_null(closed);
    if (opt.json) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::printf("sigma_dp = %.6g (sigma_nm = %.6g)\n", spec.sigma_dp, spec.sigma_dp / sens);
      std::printf("eps* = %.6g at alpha = %.6g (delta = %g, T = %zu, b = %zu, m = %zu, C = %g)\n", e.eps_star,
                  e.argmin_alpha, spec.delta, spec.steps_T, spec.batch_b, spec.dataset_m, spec.clip_C);
      if (closed_ok) std::printf("closed-form sigma_dp at this eps* (k = 1) = %.6g\n", closed);
      else std::printf("closed-form sigma_dp: not applicable (eps* > log(1/delta))\n");
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

struct CertifyOptions {
  std::size_t n = 7;
  std::size_t f = 3;
  std::size_t d = 5;
  std::size_t trials = 1000;
  std::string aggregator = "smea";
  std::string placement = "random";
  std::uint64_t seed = 1;
  double kappa = -1.0;
  bool json = false;
};

int cmd_certify(const CertifyOptions& opt) {
  AggregatorKind kind;
  std::optional<Placement> fixed;
  try {
    if (opt.n > 16) throw std::invalid_argument("n > 16 is too large to enumerate");
    if (opt.n == 0 || opt.d == 0) throw std::invalid_argument("need n >= 1 and d >= 1");
    if (opt.f > 0 && 2 * opt.f >= opt.n) throw std::invalid_argument("need f < n/2");
    kind = parse_aggregator_kind(opt.aggregator);
    if (opt.placement == "none") fixed = Placement::kNone;
    else if (opt.placement == "far") fixed = Placement::kFarPoint;
    else if (opt.placement == "scattered") fixed = Placement::kScattered;
    else if (opt.placement == "aligned") fixed = Placement::kAligned;
    else if (opt.placement != "random")
      throw std::invalid_argument("unknown placement '" + opt.placement + "' (expected random|none|far|scattered|aligned)");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  double kappa = opt.kappa;
  if (kappa < 0.0) {
    if (opt.f == 0) kappa = 0.0;
    else if (kind == AggregatorKind::kFilter) kappa = kappa_filter(opt.n, opt.f).kappa;
    else kappa = kappa_smea(opt.n, opt.f);
  }
  RandomStream stream(opt.seed, 0, StreamPurpose::kInstance);
  std::size_t passes = 0;
  double worst_ratio = 0.0;
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const Placement pl = fixed ? *fixed : random_placement(stream);
    const Instance inst = make_instance(opt.n, opt.f, opt.d, pl, stream);
    ParamVector out;
    switch (kind) {
      case AggregatorKind::kMean: out = aggregate_mean(inst.points); break;
      case AggregatorKind::kSmea: out = aggregate_smea(inst.points, opt.f).output; break;
      case AggregatorKind::kFilter: {
        // sigma0^2: the smallest top eigenvalue over (n - f)-subsets.
        const double s0 = opt.f == 0 ? covariance_spectrum(inst.points).lambda_max
                                     : aggregate_smea(inst.points, opt.f).lambda_max;
        out = aggregate_filter(inst.points, s0, kappa_filter(opt.n, std::max<std::size_t>(opt.f, 0)).eta).output;
        break;
      }
    }
    const auto cert = check_robust_averaging(inst.points, opt.f, kappa, out);
    passes += cert.holds ? 1 : 0;
    worst_ratio = std::max(worst_ratio, cert.worst_ratio);
  }
  const bool ok = passes == opt.trials;
  if (opt.json) {
    Json j{{"aggregator", to_string(kind)}, {"n", opt.n},           {"f", opt.f},
           {"d", opt.d},                    {"kappa", kappa},       {"trials", opt.trials},
           {"passes", passes},              {"violations", opt.trials - passes},
           {"worst_ratio", finite_or_null(worst_ratio)}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("%s n=%zu f=%zu d=%zu kappa=%.6g: %zu/%zu passes, worst lhs/rhs = %.6g\n", to_string(kind), opt.n,
                opt.f, opt.d, kappa, passes, opt.trials, worst_ratio);
    if (!ok) std::printf("violation: %zu instance(s) break the robust averaging bound\n", opt.trials - passes);
  }
  return ok ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private and Byzantine-robust distributed training simulator"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment matrix from a config file");
  run_cmd->add_option("--config", run.config, "INI config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out, "Output directory")->required();
  run_cmd->add_option("--seeds", run.seeds, "Seed list, e.g. 1-5 or 1,3 (overrides run.seeds)");
  run_cmd->add_option("--set", run.overrides, "Override a config key: section.key=value")->take_all();
  run_cmd->add_flag("--resume", run.resume, "Skip runs whose summary is already complete");
  run_cmd->add_flag("--json", run.json, "Print a machine-readable run listing");
  run_cmd->add_option("--threads", run.threads, "Worker threads inside each run")->check(CLI::PositiveNumber);
  run_cmd->add_option("--jobs", run.jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);

  AccountOptions acc;
  auto* acc_cmd = app.add_subcommand("account", "Privacy accountant: eps* for a noise level");
  auto* nm = acc_cmd->add_option("--sigma-nm", acc.sigma_nm, "Noise multiplier (sigma_dp = 2C/b * sigma_nm)");
  auto* dp = acc_cmd->add_option("--sigma-dp", acc.sigma_dp, "Noise standard deviation");
  auto* te = acc_cmd->add_option("--target-eps", acc.target_eps, "Calibrate sigma for this eps*");
  nm->excludes(dp)->excludes(te);
  dp->excludes(te);
  acc_cmd->add_option("--T", acc.T, "Steps");
  acc_cmd->add_option("--b", acc.b, "Batch size");
  acc_cmd->add_option("--m", acc.m, "Points per worker");
  acc_cmd->add_option("--C", acc.C, "Clipping threshold");
  acc_cmd->add_option("--delta", acc.delta, "Target delta");
  acc_cmd->add_flag("--json", acc.json, "JSON output");

  CertifyOptions cert;
  auto* cert_cmd = app.add_subcommand("certify", "Check robust averaging on random instances");
  cert_cmd->add_option("--n", cert.n, "Inputs per instance (<= 16)");
  cert_cmd->add_option("--f", cert.f, "Tolerated outliers");
  cert_cmd->add_option("--d", cert.d, "Dimension");
  cert_cmd->add_option("--trials", cert.trials, "Instances");
  cert_cmd->add_option("--aggregator", cert.aggregator, "mean|smea|filter");
  cert_cmd->add_option("--placement", cert.placement, "random|none|far|scattered|aligned");
  cert_cmd->add_option("--seed", cert.seed, "Instance seed");
  cert_cmd->add_option("--kappa", cert.kappa, "Coefficient to check (default: the rule's own)");
  cert_cmd->add_flag("--json", cert.json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (*run_cmd) return cmd_run(run);
  if (*acc_cmd) return cmd_account(acc);
  return cmd_certify(cert);
}
