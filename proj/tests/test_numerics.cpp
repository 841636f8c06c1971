#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "maskscope/rng.h"
#include "maskscope/tensor.h"

using namespace maskscope;

TEST_SUITE_BEGIN("numerics");

TEST_CASE("softmax of a symmetric row splits evenly") {
  const Tensor out = softmax_rows(Tensor({1, 2}, {0.0, 0.0}));
  CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fully masked softmax row collapses to zeros") {
  const Tensor out = softmax_rows(Tensor({1, 2}, {kNegInf, kNegInf}));
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 0.0);
}

TEST_CASE("softmax of [ln 2, 0] is [2/3, 1/3]") {
  const Tensor out = softmax_rows(Tensor({1, 2}, {std::log(2.0), 0.0}));
  CHECK(out(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rejects non-rank-2 input") {
  CHECK_THROWS_AS(softmax_rows(Tensor({2})), ShapeError);
  CHECK_THROWS_AS(softmax_rows(Tensor({2, 2, 2})), ShapeError);
}

TEST_CASE("softmax rows are shift invariant and permutation equivariant") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 2 + rng.index(6);
    Tensor row({1, c});
    for (double& v : row.data) v = rng.normal() * 3.0;
    const Tensor base = softmax_rows(row);

    Tensor shifted = row;
    const double delta = rng.uniform(-5.0, 5.0);
    for (double& v : shifted.data) v += delta;
    const Tensor shifted_out = softmax_rows(shifted);
    for (std::size_t j = 0; j < c; ++j) {
      CHECK(std::abs(shifted_out(0, j) - base(0, j)) < 1e-12);
    }

    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t j = c; j > 1; --j) std::swap(perm[j - 1], perm[rng.index(j)]);
    Tensor permuted({1, c});
    for (std::size_t j = 0; j < c; ++j) permuted(0, j) = row(0, perm[j]);
    const Tensor permuted_out = softmax_rows(permuted);
    for (std::size_t j = 0; j < c; ++j) {
      CHECK(std::abs(permuted_out(0, j) - base(0, perm[j])) < 1e-12);
    }
  }
}

TEST_CASE("partially masked rows renormalize over the open positions") {
  const Tensor out = softmax_rows(Tensor({1, 3}, {0.0, kNegInf, 0.0}));
  CHECK(out(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out(0, 1) == 0.0);
  CHECK(out(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sigmoid hits the worked values") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1e6) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sigmoid(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("sigmoid(x) + sigmoid(-x) = 1") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const double x = rng.uniform(-40.0, 40.0);
    CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) < 1e-12);
  }
}

TEST_CASE("entropy worked values") {
  CHECK(shannon_entropy({1.0, 0.0, 0.0}) == 0.0);
  CHECK(shannon_entropy({0.25, 0.25, 0.25, 0.25}) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(shannon_entropy({0.5, 0.25, 0.25}) == doctest::Approx(1.0397207708399179).epsilon(1e-12));
}

TEST_CASE("entropy rejects negatives and renormalizes drifted sums") {
  CHECK_THROWS_AS(shannon_entropy({0.5, -0.1, 0.6}), ValidationError);
  // A scaled distribution has the same entropy after renormalization.
  CHECK(shannon_entropy({1.0, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("uniform maximizes entropy over supports 2..64") {
  Rng rng(13);
  for (std::size_t n = 2; n <= 64; ++n) {
    const double uniform_h = shannon_entropy(std::vector<double>(n, 1.0 / n));
    CHECK(uniform_h == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-9));
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> p(n);
      double sum = 0.0;
      for (double& v : p) {
        v = -std::log(1.0 - rng.uniform());
        sum += v;
      }
      for (double& v : p) v /= sum;
      CHECK(shannon_entropy(p) <= uniform_h + 1e-12);
    }
  }
}

TEST_CASE("matmul validates inner dimensions") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
  const Tensor prod = matmul(Tensor({1, 2}, {1.0, 2.0}), Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  CHECK(prod(0, 0) == 1.0);
  CHECK(prod(0, 1) == 2.0);
}

TEST_CASE("tensor constructor validates data length") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
}

TEST_SUITE_END();
