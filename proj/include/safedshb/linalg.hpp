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
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safedshb {

// Dense real vector used for parameters, gradients, momentums and messages.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  ParamVector(std::initializer_list<double> init) : values_(init) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  std::span<const double> view() const noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  ParamVector& operator+=(const ParamVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  ParamVector& operator-=(const ParamVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  ParamVector& operator*=(double s) noexcept {
    for (auto& v : values_) v *= s;
    return *this;
  }

  // this += s * o
  ParamVector& axpy(double s, const ParamVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < size(); ++i) values_[i] += s * o.values_[i];
    return *this;
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  void check_same(const ParamVector& o) const {
    if (o.size() != size()) {
      throw std::invalid_argument("ParamVector: dimension mismatch (" +
                                  std::to_string(size()) + " vs " +
                                  std::to_string(o.size()) + ")");
    }
  }

  std::vector<double> values_;
};

inline ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
inline ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
inline ParamVector operator*(double s, ParamVector a) { return a *= s; }
inline ParamVector operator*(ParamVector a, double s) { return a *= s; }

inline double dot(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const ParamVector& a) { return dot(a, a); }
inline double norm(const ParamVector& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("squared_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline ParamVector unit_vector(std::size_t dim, std::size_t axis) {
  ParamVector e(dim);
  e[axis] = 1.0;
  return e;
}

// Dense symmetric matrix, full square row-major storage. Writes go through
// set(), which mirrors the entry so the matrix cannot become asymmetric.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim) : dim_(dim), a_(dim * dim, 0.0) {}

  static SymMatrix identity(std::size_t dim) {
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
  }
  static SymMatrix diagonal(std::span<const double> diag) {
    SymMatrix m(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m.set(i, i, diag[i]);
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * dim_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    a_[i * dim_ + j] = v;
    a_[j * dim_ + i] = v;
  }
  void add(std::size_t i, std::size_t j, double v) {
    a_[i * dim_ + j] += v;
    if (i != j) a_[j * dim_ + i] += v;
  }

  bool all_finite() const noexcept {
    return std::all_of(a_.begin(), a_.end(), [](double v) { return std::isfinite(v); });
  }

  double frobenius_norm() const noexcept {
    double s = 0.0;
    for (double v : a_) s += v * v;
    return std::sqrt(s);
  }

  double trace() const noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += a_[i * dim_ + i];
    return s;
  }

  ParamVector multiply(const ParamVector& v) const {
    if (v.size() != dim_) throw std::invalid_argument("SymMatrix::multiply: dimension mismatch");
    ParamVector out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) s += a_[i * dim_ + j] * v[j];
      out[i] = s;
    }
    return out;
  }

  // M + c I
  SymMatrix shifted(double c) const {
    SymMatrix m = *this;
    for (std::size_t i = 0; i < dim_; ++i) m.a_[i * dim_ + i] += c;
    return m;
  }
  SymMatrix scaled(double s) const {
    SymMatrix m = *this;
    for (auto& v : m.a_) v *= s;
    return m;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> a_;
};

struct Covariance {
  ParamVector mean;
  SymMatrix cov;
};

struct EigenPair {
  double value = 0.0;
  ParamVector vector;
};

namespace detail {

inline void check_points(std::span<const ParamVector> xs, std::span<const double> weights,
                         const char* who) {
  if (xs.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
  const std::size_t d = xs.front().size();
  for (const auto& x : xs) {
    if (x.size() != d) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
  }
  if (!weights.empty()) {
    if (weights.size() != xs.size()) {
      throw std::invalid_argument(std::string(who) + ": weight count differs from vector count");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument(std::string(who) + ": weights must be finite and nonnegative");
      }
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument(std::string(who) + ": all weights are zero");
  }
}

// Flip so the first component that is not numerically zero is positive.
inline void canonicalize_sign(ParamVector& v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  for (double x : v) {
    if (std::abs(x) > 1e-12 * scale) {
      if (x < 0.0) v *= -1.0;
      return;
    }
  }
}

inline void normalize(ParamVector& v) {
  const double nv = norm(v);
  if (nv > 0.0) v *= 1.0 / nv;
}

// Cyclic Jacobi on a copy of the matrix. Returns the largest eigenpair.
inline EigenPair jacobi_max_eig(const SymMatrix& m) {
  const std::size_t n = m.dim();
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = m(i, j);
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  const double fro = m.frobenius_norm();
  const double threshold = 1e-12 * fro;
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a[i * n + j] * a[i * n + j];
    return std::sqrt(s);
  };

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && off_norm() > threshold; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p];
          const double vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (a[i * n + i] > a[best * n + best]) best = i;
  EigenPair out{a[best * n + best], ParamVector(n)};
  for (std::size_t k = 0; k < n; ++k) out.vector[k] = v[k * n + best];
  return out;
}

inline EigenPair power_max_eig(const SymMatrix& m) {
  const std::size_t n = m.dim();
  // Shift by a Gershgorin lower bound so the spectrum is nonnegative and the
  // dominant eigenvalue is the algebraically largest one.
  double lower = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) r += std::abs(m(i, j));
    lower = std::min(lower, m(i, i) - r);
  }
  const SymMatrix shifted = m.shifted(-lower);
  ParamVector x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  // Deterministic non-symmetric start to avoid orthogonality with the target.
  for (std::size_t i = 0; i < n; ++i) x[i] += 1e-3 * static_cast<double>(i % 7);
  normalize(x);
  double lambda = 0.0;
  constexpr int kMaxIter = 10000;
  for (int it = 0; it < kMaxIter; ++it) {
    ParamVector y = shifted.multiply(x);
    lambda = dot(x, y);
    // Stop on the eigen-residual, not on the Rayleigh quotient, which settles
    // long before the vector does.
    const double res = norm(y - lambda * x);
    if (res <= 1e-10 * std::max(1.0, std::abs(lambda))) break;
    const double ny = norm(y);
    if (ny == 0.0) break;
    x = std::move(y);
    x *= 1.0 / ny;
  }
  return {lambda + lower, std::move(x)};
}

// Weighted mean with one correction pass, mean += sum w (x - mean) / sum w,
// which recovers the point exactly when all active points coincide.
template <class Weight>
ParamVector weighted_mean(std::span<const ParamVector> xs, Weight&& w, double& total) {
  const std::size_t d = xs.front().size();
  total = 0.0;
  ParamVector mean(d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (w(i) == 0.0) continue;
    total += w(i);
    mean.axpy(w(i), xs[i]);
  }
  mean *= 1.0 / total;
  ParamVector correction(d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (w(i) == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) correction[k] += w(i) * (xs[i][k] - mean[k]);
  }
  mean.axpy(1.0 / total, correction);
  return mean;
}

}  // namespace detail

// Weighted mean and covariance, normalized by the total weight.
inline Covariance empirical_covariance(std::span<const ParamVector> xs,
                                       std::span<const double> weights = {}) {
  detail::check_points(xs, weights, "empirical_covariance");
  const std::size_t d = xs.front().size();
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double total = 0.0;
  ParamVector mean = detail::weighted_mean(xs, w, total);

  SymMatrix cov(d);
  ParamVector y(d);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (w(i) == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) y[k] = xs[i][k] - mean[k];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r; c < d; ++c) cov.add(r, c, w(i) * y[r] * y[c]);
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) cov.set(r, c, cov(r, c) / total);
  return {std::move(mean), std::move(cov)};
}

// Largest eigenvalue of a symmetric matrix with a unit eigenvector whose first
// nonzero component is positive. The zero matrix yields (0, e_1).
inline EigenPair sym_max_eig(const SymMatrix& m) {
  if (!m.all_finite()) throw std::invalid_argument("sym_max_eig: non-finite entries");
  const std::size_t n = m.dim();
  if (n == 0) throw std::invalid_argument("sym_max_eig: empty matrix");
  if (m.frobenius_norm() == 0.0) return {0.0, unit_vector(n, 0)};
  EigenPair e = n <= 256 ? detail::jacobi_max_eig(m) : detail::power_max_eig(m);
  detail::normalize(e.vector);
  detail::canonicalize_sign(e.vector);
  return e;
}

struct CovarianceSpectrum {
  ParamVector mean;
  double lambda_max = 0.0;
  ParamVector eigvec;
};

// Mean and top eigenpair of the weighted empirical covariance. When there are
// fewer points than dimensions the eigenproblem is solved on the k x k Gram
// matrix G_ij = sqrt(c_i c_j) <y_i, y_j> / sum(c), whose nonzero spectrum
// equals that of the d x d covariance; the eigenvector is mapped back as
// sum_i sqrt(c_i) u_i y_i.
inline CovarianceSpectrum covariance_spectrum(std::span<const ParamVector> xs,
                                              std::span<const double> weights = {}) {
  detail::check_points(xs, weights, "covariance_spectrum");
  const std::size_t d = xs.front().size();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (weights.empty() || weights[i] > 0.0) active.push_back(i);
  const std::size_t k = active.size();

  if (k >= d) {
    auto c = empirical_covariance(xs, weights);
    auto e = sym_max_eig(c.cov);
    return {std::move(c.mean), e.value, std::move(e.vector)};
  }

  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double total = 0.0;
  ParamVector mean = detail::weighted_mean(xs, w, total);

  std::vector<ParamVector> ys;
  std::vector<double> root_w;
  ys.reserve(k);
  for (std::size_t i : active) {
    ys.push_back(xs[i] - mean);
    root_w.push_back(std::sqrt(w(i)));
  }
  SymMatrix gram(k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a; b < k; ++b)
      gram.set(a, b, root_w[a] * root_w[b] * dot(ys[a], ys[b]) / total);

  if (gram.frobenius_norm() == 0.0) return {std::move(mean), 0.0, unit_vector(d, 0)};
  const EigenPair g = sym_max_eig(gram);
  ParamVector v(d);
  for (std::size_t a = 0; a < k; ++a) v.axpy(root_w[a] * g.vector[a], ys[a]);
  detail::normalize(v);
  detail::canonicalize_sign(v);
  return {std::move(mean), std::max(g.value, 0.0), std::move(v)};
}

}  // namespace safedshb
