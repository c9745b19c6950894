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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safedshb/model.hpp"
#include "safedshb/rng.hpp"

namespace safedshb {

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;
  std::string source;

  std::size_t size() const noexcept { return samples.size(); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline double parse_double(std::string_view tok, const std::string& source, std::size_t line) {
  double v = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError(source, line, "bad number '" + std::string(tok) + "'");
  return v;
}

}  // namespace detail

// Parses LIBSVM text ("label idx:val idx:val ..." with 1-based indices) into
// dense samples of width max(max index, min_dim). Labels +1/1 map to 1 and
// -1/0 map to 0.
inline Dataset parse_libsvm(std::istream& in, const std::string& source = "<stream>",
                            std::size_t min_dim = 0) {
  struct Row {
    int label;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<Row> rows;
  std::size_t max_index = 0;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.resize(hash);
    std::istringstream ls(text);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank line

    const double raw_label = detail::parse_double(tok, source, line_no);
    Row row;
    if (raw_label == 1.0) row.label = 1;
    else if (raw_label == 0.0 || raw_label == -1.0) row.label = 0;
    else throw ParseError(source, line_no, "non-binary label '" + tok + "'");

    std::size_t prev = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0)
        throw ParseError(source, line_no, "expected idx:val, got '" + tok + "'");
      std::size_t idx = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + colon, idx);
      if (ec != std::errc() || p != tok.data() + colon || idx == 0)
        throw ParseError(source, line_no, "bad feature index in '" + tok + "'");
      if (idx <= prev) throw ParseError(source, line_no, "feature indices must increase");
      prev = idx;
      row.entries.emplace_back(idx - 1,
                               detail::parse_double(std::string_view(tok).substr(colon + 1),
                                                    source, line_no));
      max_index = std::max(max_index, idx);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(source, line_no, "no samples");

  Dataset ds;
  ds.dim = std::max(max_index, min_dim);
  ds.source = source;
  ds.samples.reserve(rows.size());
  for (auto& r : rows) {
    Sample s{ParamVector(ds.dim), r.label};
    for (auto [i, v] : r.entries) s.features[i] = v;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline Dataset parse_libsvm(const std::string& path, std::size_t min_dim = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");
  return parse_libsvm(in, path, min_dim);
}

// Writes nonzero entries only; doubles are printed with round-trip precision.
inline void write_libsvm(std::ostream& out, std::span<const Sample> samples) {
  char buf[64];
  for (const auto& s : samples) {
    out << s.label;
    for (std::size_t i = 0; i < s.features.size(); ++i) {
      if (s.features[i] == 0.0) continue;
      std::snprintf(buf, sizeof buf, " %zu:%.17g", i + 1, s.features[i]);
      out << buf;
    }
    out << '\n';
  }
}

// Appends a constant-1 feature (the bias weight).
inline Dataset with_bias(Dataset ds) {
  for (auto& s : ds.samples) {
    std::vector<double> v(s.features.begin(), s.features.end());
    v.push_back(1.0);
    s.features = ParamVector(std::move(v));
  }
  ++ds.dim;
  return ds;
}

template <class T>
void shuffle_in_place(std::vector<T>& items, RandomStream& stream) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

struct TrainTest {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Seeded shuffle, then the first round(fraction * N) samples become the test set.
inline TrainTest split_train_test(std::span<const Sample> samples, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split_train_test: fraction must lie in (0,1)");
  const auto test_count =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(samples.size())));
  if (test_count == 0 || test_count >= samples.size())
    throw std::invalid_argument("split_train_test: degenerate split of " +
                                std::to_string(samples.size()) + " samples");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream stream(seed, 0, StreamPurpose::kSplit);
  shuffle_in_place(order, stream);
  TrainTest out;
  out.test.reserve(test_count);
  out.train.reserve(samples.size() - test_count);
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < test_count ? out.test : out.train).push_back(samples[order[k]]);
  return out;
}

struct WorkerPartition {
  std::vector<std::vector<Sample>> datasets;
  std::size_t m = 0;  // points per worker
};

// Seeded shuffle and equal split into n datasets of floor(|train|/n) points;
// the remainder is dropped.
inline WorkerPartition partition_workers(std::span<const Sample> train, std::size_t n,
                                         std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("partition_workers: n must be >= 1");
  if (train.size() < n)
    throw std::invalid_argument("partition_workers: fewer samples (" + std::to_string(train.size()) +
                                ") than workers (" + std::to_string(n) + ")");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream stream(seed, 0, StreamPurpose::kPartition);
  shuffle_in_place(order, stream);
  WorkerPartition out;
  out.m = train.size() / n;
  out.datasets.resize(n);
  for (std::size_t w = 0; w < n; ++w) {
    out.datasets[w].reserve(out.m);
    for (std::size_t k = 0; k < out.m; ++k) out.datasets[w].push_back(train[order[w * out.m + k]]);
  }
  return out;
}

// b distinct indices in [0, m), uniform over size-b subsets (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(std::size_t m, std::size_t b,
                                                           RandomStream& stream) {
  if (b > m) throw std::invalid_argument("sample_without_replacement: b > m");
  std::vector<std::size_t> pool(m);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.below(m - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(b);
  return pool;
}

// Binary features in {0, 1} and labels drawn from a logistic model with a
// random ground-truth weight vector; a last constant-1 feature acts as bias.
// Used for examples, smoke runs and determinism checks.
inline Dataset make_synthetic_logistic(std::size_t count, std::size_t dim, std::uint64_t seed,
                                       double signal = 4.0) {
  if (dim < 2) throw std::invalid_argument("make_synthetic_logistic: dim must be >= 2");
  RandomStream stream(seed, 0, StreamPurpose::kSynthetic);
  ParamVector truth(dim);
  for (std::size_t i = 0; i + 1 < dim; ++i) truth[i] = stream.gaussian();
  truth *= signal / std::sqrt(static_cast<double>(dim - 1));
  Dataset ds;
  ds.dim = dim;
  ds.source = "synthetic";
  ds.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    ParamVector x(dim);
    for (std::size_t i = 0; i + 1 < dim; ++i) x[i] = stream.uniform() < 0.5 ? 0.0 : 1.0;
    x[dim - 1] = 1.0;
    double z = dot(truth, x);
    for (std::size_t i = 0; i + 1 < dim; ++i) z -= 0.5 * truth[i];  // center the score
    const int label = stream.uniform() < stable_sigmoid(z) ? 1 : 0;
    ds.samples.push_back({std::move(x), label});
  }
  return ds;
}

}  // namespace safedshb
