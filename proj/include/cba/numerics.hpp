// Copyright 2026 The cbadapter Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cba {

// Error categories map one-to-one onto the C API status codes.
enum class ErrorKind { kArgument = 1, kConfig = 2, kRuntime = 3 };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorKind kind = ErrorKind::kRuntime)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// out = a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// out = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// acc += a^T * b
void accumulate_tn(Matrix& acc, const Matrix& a, const Matrix& b);
// Adds `bias` (1 x cols) to every row.
void add_row_bias(Matrix& m, const Matrix& bias);

/// splitmix64 state. The recurrence is fixed so a seed names one stream on
/// every platform.
struct RngState {
  std::uint64_t state = 0;
  friend bool operator==(const RngState&, const RngState&) = default;
};

enum class Draw { kUniform01, kGaussian };

// One raw splitmix64 step.
std::pair<std::uint64_t, RngState> splitmix64_next(RngState s);

// Functional form: one value of the requested kind plus the advanced state.
// Gaussian draws consume two uniforms and discard the paired value; use Rng
// when the cached second value should be kept.
std::pair<double, RngState> rng_stream(RngState s, Draw kind);

/// Stateful wrapper over the splitmix64 stream with a cached Box-Muller value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_{seed} {}
  explicit Rng(RngState s) : state_(s) {}

  std::uint64_t next_u64();
  // Top 53 bits mapped to [0, 1).
  double uniform01();
  double gaussian();
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  RngState state() const noexcept { return state_; }

 private:
  RngState state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent child seed from a parent seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag);

std::vector<double> softmax_row(std::span<const double> logits);
double logsumexp(std::span<const double> xs);
// log(exp(a) + exp(b)) with -inf handled.
double log_add(double a, double b);

// Row-wise softmax of a matrix.
Matrix softmax_rows(const Matrix& logits);

// Central-difference gradient check. The step for coordinate i is
// epsilon * max(1, |params[i]|). Returns the max elementwise relative error
// |a - fd| / max(1e-8, |a| + |fd|).
double grad_check(const std::function<double(std::span<const double>)>& loss_fn,
                  std::span<const double> analytic_grad,
                  std::span<const double> params, double epsilon);

}  // namespace cba
