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

#include "cba/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cba {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error("matrix data length " + std::to_string(data_.size()) +
                " does not match shape " + std::to_string(rows_) + "x" +
                std::to_string(cols_));
  }
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  accumulate_tn(out, a, b);
  return out;
}

void accumulate_tn(Matrix& acc, const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  require(acc.rows() == a.cols() && acc.cols() == b.cols(),
          "matmul_tn: accumulator shape mismatch");
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* ar = a.row(k).data();
    const double* br = b.row(k).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* o = acc.row(i).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Matrix out(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  require(bias.rows() == 1 && bias.cols() == m.cols(), "bias shape mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias(0, c);
  }
}

std::pair<std::uint64_t, RngState> splitmix64_next(RngState s) {
  s.state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = s.state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return {z, s};
}

namespace {

double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Box-Muller on two uniforms; returns the (cos, sin) pair.
std::pair<double, double> box_muller(double u1, double u2) {
  const double r = std::sqrt(-2.0 * std::log1p(-u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

}  // namespace

std::pair<double, RngState> rng_stream(RngState s, Draw kind) {
  auto [a, s1] = splitmix64_next(s);
  if (kind == Draw::kUniform01) return {to_unit(a), s1};
  auto [b, s2] = splitmix64_next(s1);
  return {box_muller(to_unit(a), to_unit(b)).first, s2};
}

std::uint64_t Rng::next_u64() {
  auto [v, next] = splitmix64_next(state_);
  state_ = next;
  return v;
}

double Rng::uniform01() { return to_unit(next_u64()); }

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  auto [z0, z1] = box_muller(u1, u2);
  spare_ = z1;
  has_spare_ = true;
  return z0;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw Error("Rng::below: empty range");
  return static_cast<std::size_t>(uniform01() * static_cast<double>(n));
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  RngState s{parent ^ (tag * 0xD1B54A32D192ED03ULL)};
  auto [v, next] = splitmix64_next(s);
  (void)next;
  return v;
}

std::vector<double> softmax_row(std::span<const double> logits) {
  if (logits.empty()) throw Error("empty distribution");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

double logsumexp(std::span<const double> xs) {
  if (xs.empty()) throw Error("logsumexp of empty vector");
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double log_add(double a, double b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto p = softmax_row(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

double grad_check(const std::function<double(std::span<const double>)>& loss_fn,
                  std::span<const double> analytic_grad,
                  std::span<const double> params, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("grad_check: epsilon must be positive");
  if (analytic_grad.size() != params.size()) {
    throw Error("grad_check: gradient and parameter sizes differ");
  }
  std::vector<double> theta(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    const double h = epsilon * std::max(1.0, std::abs(orig));
    theta[i] = orig + h;
    const double up = loss_fn(theta);
    theta[i] = orig - h;
    const double down = loss_fn(theta);
    theta[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error("grad_check: non-finite loss at coordinate " + std::to_string(i));
    }
    const double fd = (up - down) / (2.0 * h);
    const double a = analytic_grad[i];
    const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace cba
