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


#include <cmath>
#include <vector>

#include "cba/numerics.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cba;

TEST_CASE("splitmix64 matches the published reference vector") {
  auto [value, next] = splitmix64_next(RngState{0});
  CHECK(value == 0xE220A8397B1DCDAFULL);
  CHECK(next.state != 0);
  Rng rng(0);
  CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("uniform draws stay in [0,1) and seeds reproduce") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform01();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(x == b.uniform01());
  }
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(seed);
    for (int i = 0; i < 20; ++i) {
      const double x = r.uniform01();
      CHECK((x >= 0.0 && x < 1.0));
    }
  }
}

TEST_CASE("functional stream agrees with the stateful wrapper") {
  RngState s{7};
  Rng r(7);
  for (int i = 0; i < 10; ++i) {
    auto [u, next] = rng_stream(s, Draw::kUniform01);
    CHECK(u == r.uniform01());
    s = next;
  }
  CHECK(s == r.state());
}

TEST_CASE("below respects its bound and derive_seed separates streams") {
  Rng r(3);
  for (int i = 0; i < 500; ++i) CHECK(r.below(7) < 7);
  CHECK_THROWS(r.below(0));
  CHECK(derive_seed(1, 1) != derive_seed(1, 2));
  CHECK(derive_seed(1, 1) != derive_seed(2, 1));
  CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}

TEST_CASE("gaussian draws have plausible moments") {
  Rng r(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("softmax_row examples") {
  auto u = softmax_row(std::vector<double>{0, 0, 0});
  for (double x : u) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  auto p = softmax_row(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
  CHECK(p[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("softmax_row sums to one and ignores shifts (property)") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(9);
    std::vector<double> x(n), shifted(n);
    const double c = 50.0 * (rng.uniform01() - 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 10.0 * rng.gaussian();
      shifted[i] = x[i] + c;
    }
    auto p = softmax_row(x), q = softmax_row(shifted);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += p[i];
      CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("logsumexp examples") {
  CHECK(logsumexp(std::vector<double>{2.5}) == 2.5);
  CHECK(logsumexp(std::vector<double>{0, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double big = logsumexp(std::vector<double>{1000, 1000});
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_add(ninf, 1.5) == 1.5);
  CHECK(log_add(ninf, ninf) == ninf);
}

TEST_CASE("matrix products agree with naive loops") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(5), k = 1 + rng.below(5), m = 1 + rng.below(5);
    Matrix a = testing::random_matrix(n, k, rng), b = testing::random_matrix(k, m, rng);
    Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t l = 0; l < k; ++l) s += a(i, l) * b(l, j);
        CHECK(std::abs(c(i, j) - s) < 1e-12);
      }
    Matrix at(k, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < k; ++l) at(l, i) = a(i, l);
    Matrix c2 = matmul_tn(at, b);
    Matrix bt(m, k);
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t j = 0; j < m; ++j) bt(j, l) = b(l, j);
    Matrix c3 = matmul_nt(a, bt);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(std::abs(c2.flat()[i] - c.flat()[i]) < 1e-12);
      CHECK(std::abs(c3.flat()[i] - c.flat()[i]) < 1e-12);
    }
  }
  CHECK_THROWS(matmul(Matrix(2, 3), Matrix(2, 3)));
}

TEST_CASE("grad_check examples") {
  auto square = [](std::span<const double> x) { return x[0] * x[0]; };
  std::vector<double> at{3.0}, grad{6.0};
  CHECK(grad_check(square, grad, at, 1e-4) < 1e-6);
  auto constant = [](std::span<const double>) { return 4.0; };
  std::vector<double> zero{0.0};
  CHECK(grad_check(constant, zero, at, 1e-4) == 0.0);
  std::vector<double> wrong{5.0};
  CHECK(grad_check(square, wrong, at, 1e-4) > 1e-2);
}
