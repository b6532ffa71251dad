// seqtrain/common.hpp

// Copyright 2026  The seqtrain Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace seqtrain {

using Vector = Eigen::VectorXd;
// Frame-major matrices: one row per frame.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Flat vector of every weight and bias of a Network (see Network for layout).
using ParameterVector = Eigen::VectorXd;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// Error hierarchy. Every error the library raises derives from Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes, invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: stale caches, wrong dimensions passed to an operator, size guards.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed input data: bad lattices, missing annotations, unparsable files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced or consumed by a computation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int layer = -1)
      : Error(what), layer_(layer) {}
  int layer() const { return layer_; }

 private:
  int layer_;
};

namespace detail {

template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace detail

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// Row-wise log-softmax.
inline Matrix log_softmax_rows(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    const double m = a.row(t).maxCoeff();
    const double lse = m + std::log((a.row(t).array() - m).exp().sum());
    out.row(t) = a.row(t).array() - lse;
  }
  return out;
}

inline Matrix softmax_rows(const Matrix& a) {
  return log_softmax_rows(a).array().exp().matrix();
}

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

// FNV-1a over the raw bytes; used to tag caches with the parameters that
// produced them.
inline std::uint64_t fingerprint(const Vector& v) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
  const std::size_t n = static_cast<std::size_t>(v.size()) * sizeof(double);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h ^ static_cast<std::uint64_t>(v.size());
}

inline double relative_error(const Eigen::Ref<const Eigen::MatrixXd>& a,
                             const Eigen::Ref<const Eigen::MatrixXd>& b) {
  const double denom = std::max({a.norm(), b.norm(), 1e-300});
  return (a - b).norm() / denom;
}

}  // namespace seqtrain
