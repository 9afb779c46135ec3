/*
 * Copyright 2026 The embedmatch Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace embedmatch {

/// Every recoverable failure in the library is reported with this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// C (+)= A * B for row-major matrices.
inline void matmul(const Mat& a, const Mat& b, Mat& c, bool accumulate = false) {
  if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
  if (!accumulate) c = Mat(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* crow = &c(i, 0);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += av * brow[j];
    }
  }
}

// C (+)= A^T * B
inline void matmul_tn(const Mat& a, const Mat& b, Mat& c, bool accumulate = false) {
  if (a.rows() != b.rows()) throw Error("matmul_tn: dimension mismatch");
  if (!accumulate) c = Mat(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* brow = b.row(p).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      double* crow = &c(i, 0);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += av * brow[j];
    }
  }
}

// C (+)= A * B^T
inline void matmul_nt(const Mat& a, const Mat& b, Mat& c, bool accumulate = false) {
  if (a.cols() != b.cols()) throw Error("matmul_nt: dimension mismatch");
  if (!accumulate) c = Mat(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
  }
}

/// y = W x + b with W stored (out x in).
inline Vec affine(const Mat& w, std::span<const double> b, std::span<const double> x) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw Error("affine: dimension mismatch");
  }
  Vec y(b.begin(), b.end());
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] += dot(w.row(r), x);
  return y;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

/// Softmax via max-subtraction.
inline Vec stable_softmax(std::span<const double> v) {
  if (v.empty()) throw Error("empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  Vec out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    z += out[i];
  }
  for (double& x : out) x /= z;
  return out;
}

/// log(sum(exp(v)))
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw Error("empty vector");
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - m);
  return m + std::log(z);
}

/// Softplus gamma(x) = log(1 + e^x).
inline double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log sigma(x) = -softplus(-x)
inline double log_sigmoid(double x) { return -softplus(-x); }

struct SigmoidTriple {
  double sigma;
  double log_sigma;
  double softplus;
};

inline SigmoidTriple sigmoid_logsigmoid_softplus(double x) {
  return {sigmoid(x), log_sigmoid(x), softplus(x)};
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

/// Seeded generator. The engine is std::mt19937_64 (fully specified by the
/// standard); the distributions below are written out so that draws do not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent sub-seed from a base seed and a name (FNV-1a mix).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view name) {
  std::uint64_t h = 1469598103934665603ULL ^ base;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

inline void fill_normal(Mat& m, Rng& rng, double stddev) {
  for (double& x : m.data()) x = rng.normal(0.0, stddev);
}

inline void fill_xavier_uniform(Mat& m, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& x : m.data()) x = rng.uniform(-a, a);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

/// Objective returning its value and writing the analytic gradient.
using ParametricObjective = std::function<double(std::span<const double> params, Vec& grad)>;

/// Max over parameters of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const ParametricObjective& loss_fn, Vec params, double eps = 1e-5) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  Vec analytic(params.size(), 0.0);
  const double f0 = loss_fn(params, analytic);
  if (!std::isfinite(f0)) throw Error("non-finite objective");
  Vec scratch(params.size(), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double fp = loss_fn(params, scratch);
    params[i] = saved - eps;
    const double fm = loss_fn(params, scratch);
    params[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw Error("non-finite objective");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace embedmatch
