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

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "safedshb/experiment.hpp"

using namespace safedshb;

namespace {

ConfigMap parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.ini");
}

ConfigMap synthetic(const std::string& extra = "") {
  return parse("[run]\nT = 12\nmetrics_every = 4\n[data]\nsource = synthetic\nsynthetic_count = 420\n"
               "synthetic_dim = 6\n" + extra);
}

}  // namespace

TEST(Config, DefaultsCoverEveryKey) {
  const ConfigMap d = default_config();
  EXPECT_EQ(d.size(), config_keys().size());
  EXPECT_EQ(d.at("run.n"), "7");
  EXPECT_EQ(d.at("run.f"), "3");
  EXPECT_EQ(d.at("privacy.batch"), "25");
  EXPECT_EQ(d.at("schedule.beta"), "0.99");
  EXPECT_EQ(d.at("model.l2_lambda"), "1e-4");
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse("[run]\nbogus = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.bogus"), std::string::npos);
  }
  EXPECT_THROW(parse("[nosuch]\nn = 3\n"), ConfigError);
  ConfigMap c = default_config();
  EXPECT_THROW(set_config_value(c, "attack.power", "1"), ConfigError);
}

TEST(Config, MalformedValuesReportKey) {
  auto message = [](const std::string& text) -> std::string {
    try {
      resolve_point(parse(text));
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message("[run]\nn = seven\n").find("run.n"), std::string::npos);
  EXPECT_NE(message("[attack]\nkind = ipm\n").find("attack.kind"), std::string::npos);
  EXPECT_NE(message("[run]\nn = 6\nf = 3\n").find("run.f"), std::string::npos);
  EXPECT_NE(message("[privacy]\ndelta = 1.5\n").find("privacy.delta"), std::string::npos);
  EXPECT_NE(message("[aggregator]\nrule = filter\n").find("filter_sigma0_sq"), std::string::npos);
  EXPECT_NE(message("[data]\nsource = case3\n").find("model.loss"), std::string::npos);
}

TEST(Config, ResolvedSigmaFromNoiseMultiplier) {
  const PointSettings p = resolve_point(parse("[privacy]\nsigma_nm = 2\n"));
  EXPECT_DOUBLE_EQ(p.run.sigma_dp, 2.0 / 25.0 * 2.0);
  const PointSettings q = resolve_point(parse("[privacy]\nsigma_dp = 0.5\n"));
  EXPECT_DOUBLE_EQ(q.run.sigma_dp, 0.5);
  EXPECT_EQ(p.run.attack.tau_grid.size(), 51u);
  EXPECT_EQ(p.run.attack.tau_grid.front(), 0.0);
  EXPECT_NEAR(p.run.attack.tau_grid.back(), 10.0, 1e-12);
}

TEST(SeedList, Forms) {
  EXPECT_EQ(parse_seed_list("1-5"), (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(parse_seed_list("3, 9"), (std::vector<std::uint64_t>{3, 9}));
  EXPECT_EQ(parse_seed_list("1-2,7"), (std::vector<std::uint64_t>{1, 2, 7}));
  EXPECT_THROW(parse_seed_list(""), ConfigError);
  EXPECT_THROW(parse_seed_list("5-1"), ConfigError);
  EXPECT_THROW(parse_seed_list("x"), ConfigError);
}

TEST(ConfigHash, IgnoresSeedsAndSweepButNotValues) {
  ConfigMap a = default_config();
  ConfigMap b = a;
  b["run.seeds"] = "9";
  b["sweep.attack"] = "sf";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["run.T"] = "401";
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(ExpandMatrix, EmptySweepGivesOnePoint) {
  const auto m = expand_matrix(default_config());
  EXPECT_EQ(m.points.size(), 1u);
  EXPECT_EQ(m.seeds.size(), 5u);
}

TEST(ExpandMatrix, CrossProductOrder) {
  const auto m = expand_matrix(parse("[sweep]\nattack = alie, sf\nsigma_nm = 1,2,3\n"));
  ASSERT_EQ(m.points.size(), 6u);
  EXPECT_EQ(m.points[0].at("attack.kind"), "alie");
  EXPECT_EQ(m.points[0].at("privacy.sigma_nm"), "1");
  EXPECT_EQ(m.points[1].at("privacy.sigma_nm"), "2");
  EXPECT_EQ(m.points[5].at("attack.kind"), "sf");
  EXPECT_EQ(m.points[5].at("privacy.sigma_nm"), "3");
  std::set<std::string> hashes;
  for (const auto& p : m.points) hashes.insert(config_hash(p));
  EXPECT_EQ(hashes.size(), 6u);
}

TEST(PrepareData, SplitAndPartitionSizes) {
  const PointSettings p = resolve_point(synthetic());
  DatasetCache cache;
  const auto d = prepare_data(p, 1, cache);
  EXPECT_EQ(d.test.size(), 84u);  // round(0.2 * 420)
  EXPECT_EQ(d.train_size, 336u);
  EXPECT_EQ(d.m, 48u);
  EXPECT_EQ(d.workers.size(), 7u);
  EXPECT_EQ(d.dim, 6u);
  // the split is fixed by data.split_seed, the partition follows the run seed
  const auto e = prepare_data(p, 2, cache);
  EXPECT_EQ(e.test, d.test);
  EXPECT_NE(e.workers[0], d.workers[0]);
}

TEST(PrepareData, MissingFileIsReported) {
  ConfigMap c = default_config();
  c["data.path"] = "/nonexistent/phishing";
  DatasetCache cache;
  try {
    prepare_data(resolve_point(c), 1, cache);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("missing dataset file"), std::string::npos);
  }
}

TEST(ExecuteRun, SummaryFields) {
  const PointSettings p = resolve_point(synthetic());
  DatasetCache cache;
  const auto out = execute_run(p, 3, 1, cache, "test-build");
  const Json& s = out.summary;
  EXPECT_EQ(s["status"], "complete");
  EXPECT_EQ(s["build_id"], "test-build");
  EXPECT_EQ(s["config_hash"], p.hash);
  EXPECT_EQ(s["seed"], 3);
  EXPECT_EQ(s["steps"], 12);
  EXPECT_EQ(s["config"]["run"]["T"], "12");
  EXPECT_EQ(s["derived"]["m"], 48);
  EXPECT_TRUE(s["final_accuracy"].is_number());
  EXPECT_TRUE(s["eps_star"].is_number());
  const double eps = compose_epsilon_star({1.0, 25, 48, 0.08, 12, 1e-4}).eps_star;
  EXPECT_EQ(s["eps_star"].get<double>(), eps);
  EXPECT_EQ(s["theta_final"].size(), 6u);
  ASSERT_TRUE(s["theta_hat_index"].is_number());
  EXPECT_LT(s["theta_hat_index"].get<std::size_t>(), 12u);
}

TEST(ExecuteRun, MetricsJsonlShape) {
  const PointSettings p = resolve_point(synthetic());
  DatasetCache cache;
  const auto out = execute_run(p, 1, 1, cache, "b");
  const std::string text = metrics_jsonl(out.result.metrics);
  std::istringstream lines(text);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const Json j = Json::parse(line);
    EXPECT_EQ(j["t"], count);
    EXPECT_TRUE(j["train_loss"].is_number());
    // diagnostics at t % 4 == 0 and the last step
    const bool diag = count % 4 == 0 || count == 11;
    EXPECT_EQ(j["drift"].is_number(), diag) << line;
    EXPECT_TRUE(j["chosen_tau"].is_number());  // default attack is alie
    ++count;
  }
  EXPECT_EQ(count, 12u);
}

TEST(ExecuteRun, Case3NeedsNoFile) {
  const PointSettings p = resolve_point(parse(
      "[run]\nT = 50\n[data]\nsource = case3\n[model]\nloss = quadratic\n[privacy]\nsigma_dp = 0\nbatch = 1\n"
      "[attack]\nkind = none\n[schedule]\ngamma = 0.1\nbeta = 0\n"));
  DatasetCache cache;
  const auto out = execute_run(p, 1, 1, cache, "b");
  EXPECT_TRUE(out.summary["final_accuracy"].is_null());
  EXPECT_TRUE(out.summary["eps_star"].is_null());
}

TEST(Table, SummaryStatistics) {
  const ConfigMap point = default_config();
  std::vector<Json> runs;
  for (double a : {0.7, 0.8, 0.9}) {
    Json j;
    j["final_accuracy"] = a;
    j["final_loss"] = 1.0 - a;
    j["eps_star"] = 4.5;
    runs.push_back(j);
  }
  const TableRow row = summarize_point(point, "abc", runs);
  EXPECT_EQ(row.runs, 3u);
  EXPECT_NEAR(row.mean_accuracy, 0.8, 1e-15);
  EXPECT_NEAR(row.std_accuracy, 0.1, 1e-15);  // sample standard deviation
  EXPECT_NEAR(row.mean_loss, 0.2, 1e-15);
  const std::vector<TableRow> rows{row};
  EXPECT_EQ(table_csv(rows),
            "config_hash,attack,aggregator,sigma_nm,runs,mean_final_accuracy,std_final_accuracy,mean_final_loss,"
            "eps_star\nabc,alie,smea,1,3,0.8,0.1,0.2,4.5\n");
}
