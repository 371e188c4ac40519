// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "op_cases.hpp"
#include "tridx/attention.hpp"
#include "tridx/error.hpp"
#include "tridx/random.hpp"
#include "tridx/tensor.hpp"

using namespace tridx;
using tridx::testing::gradcheck;
using tridx::testing::project_to_scalar;

namespace {

Tensor identity(std::size_t d) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  return Tensor::from({d, d}, v);
}

// Straight-line scaled dot-product attention used as the oracle.
std::vector<double> reference_mha(const std::vector<double>& q, const std::vector<double>& k,
                                  const std::vector<double>& v, std::size_t mq, std::size_t mk, std::size_t d,
                                  std::size_t heads, const AttentionWeights& w) {
  auto proj = [d](const std::vector<double>& x, std::size_t rows, const Tensor& wt) {
    std::vector<double> out(rows * d, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t t = 0; t < d; ++t) out[i * d + j] += x[i * d + t] * wt.at(t, j);
    return out;
  };
  const auto qp = proj(q, mq, w.wq), kp = proj(k, mk, w.wk), vp = proj(v, mk, w.wv);
  const std::size_t dh = d / heads;
  std::vector<double> joined(mq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < mq; ++i) {
      std::vector<double> s(mk);
      double mx = -1e300;
      for (std::size_t j = 0; j < mk; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < dh; ++t) dot += qp[i * d + h * dh + t] * kp[j * d + h * dh + t];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < mk; ++j)
        for (std::size_t t = 0; t < dh; ++t) joined[i * d + h * dh + t] += s[j] / z * vp[j * d + h * dh + t];
    }
  }
  return proj(joined, mq, w.wo);
}

AttentionWeights random_weights(std::size_t d, Rng& rng) {
  return {randn({d, d}, 0.4, rng), randn({d, d}, 0.4, rng), randn({d, d}, 0.4, rng), randn({d, d}, 0.4, rng)};
}

}  // namespace

TEST_CASE("linear: identity, zero weight with bias, hand product") {
  const Tensor x = Tensor::from({1, 2}, {1, 2});
  const Tensor y1 = linear(x, identity(2));
  CHECK(y1.at(0) == 1.0);
  CHECK(y1.at(1) == 2.0);

  const Tensor y2 = linear(x, Tensor::zeros({2, 2}), Tensor::from({2}, {3, 4}));
  CHECK(y2.at(0) == 3.0);
  CHECK(y2.at(1) == 4.0);

  const Tensor y3 = linear(Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::from({2, 1}, {1, 1}));
  CHECK(y3.shape() == Shape{2, 1});
  CHECK(y3.at(0) == 3.0);
  CHECK(y3.at(1) == 7.0);

  CHECK_THROWS_AS(linear(x, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("linear is additive in x up to the bias") {
  Rng rng(0);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor w = randn({5, 3}, 1.0, rng, false), b = randn({3}, 1.0, rng, false);
    const Tensor x1 = randn({4, 5}, 1.0, rng, false), x2 = randn({4, 5}, 1.0, rng, false);
    const Tensor lhs = linear(add(x1, x2), w, b);
    const Tensor rhs = sub(add(linear(x1, w, b), linear(x2, w, b)), add_row(Tensor::zeros({4, 3}), b));
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs.at(i) - rhs.at(i)) < 1e-12);
  }
}

TEST_CASE("softmax examples and invariants") {
  const Tensor u = softmax(Tensor::from({3}, {0, 0, 0}));
  for (double p : u.values()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Tensor big = softmax(Tensor::from({3}, {1000, 0, 0}));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) < 1e-300);

  const Tensor r = softmax(Tensor::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(std::abs(r.at(0) - 1.0 / 6.0) < 1e-15);
  CHECK(std::abs(r.at(1) - 2.0 / 6.0) < 1e-15);
  CHECK(std::abs(r.at(2) - 3.0 / 6.0) < 1e-15);

  Rng rng(0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = randn({3, 7}, 3.0, rng, false);
    const Tensor y = softmax(x, -1);
    const Tensor y_shift = softmax(add_scalar(x, 12.5), -1);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(y.at(i, j) > 0.0);
        CHECK(std::abs(y.at(i, j) - y_shift.at(i, j)) < 1e-12);
        s += y.at(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const Tensor col = softmax(x, 0);
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += col.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("multi-head attention degenerate cases and oracle") {
  Rng rng(0);
  const std::size_t d = 4;
  const AttentionWeights ident{identity(d), identity(d), identity(d), identity(d)};

  // a single key: the softmax weight is exactly one
  const Tensor q = randn({3, d}, 1.0, rng, false), k1 = randn({1, d}, 1.0, rng, false), v1 = randn({1, d}, 1.0, rng, false);
  const Tensor o1 = multi_head_attention(q, k1, v1, 1, ident);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < d; ++j) CHECK(o1.at(i, j) == v1.at(0, j));

  // identical keys: uniform weights, so the column mean of v
  const Tensor row = randn({1, d}, 1.0, rng, false);
  const Tensor k = concat_rows({row, row, row});
  const Tensor v = randn({3, d}, 1.0, rng, false);
  const Tensor o2 = multi_head_attention(q, k, v, 2, ident);
  for (std::size_t j = 0; j < d; ++j) {
    const double mu = (v.at(0, j) + v.at(1, j) + v.at(2, j)) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(o2.at(i, j) - mu) < 1e-12);
  }

  CHECK_THROWS_AS(multi_head_attention(q, k, v, 3, ident), ConfigError);

  // seed-0 2×4 inputs against the straight-line evaluation
  Rng r0(0);
  const Tensor qa = randn({2, d}, 1.0, r0, false), ka = randn({2, d}, 1.0, r0, false), va = randn({2, d}, 1.0, r0, false);
  const AttentionWeights w = random_weights(d, r0);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const Tensor out = multi_head_attention(qa, ka, va, heads, w);
    const auto ref = reference_mha({qa.values().begin(), qa.values().end()}, {ka.values().begin(), ka.values().end()},
                                   {va.values().begin(), va.values().end()}, 2, 2, d, heads, w);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out.at(i) - ref[i]) < 1e-12);
  }
}

TEST_CASE("cross entropy examples") {
  const std::vector<int> t8{3, 5};
  const Tensor uniform = Tensor::zeros({2, 8});
  CHECK(std::abs(cross_entropy(uniform, t8, {true, true}).item() - std::log(8.0)) < 1e-12);

  std::vector<double> peaked(8, 0.0);
  peaked[2] = 100.0;
  const std::vector<int> t2{2};
  CHECK(cross_entropy(Tensor::from({1, 8}, peaked), t2, {true}).item() < 1e-40);

  const std::vector<int> t{1, 0};
  const double got = cross_entropy(Tensor::from({2, 2}, {1, 2, 3, 1}), t, {true, true}).item();
  CHECK(std::abs(got - 0.22009484928059775) < 1e-15);
  // the mask drops the second row entirely
  const double first = cross_entropy(Tensor::from({2, 2}, {1, 2, 3, 1}), t, {true, false}).item();
  CHECK(std::abs(first - 0.31326168751822286) < 1e-15);

  CHECK_THROWS_AS(cross_entropy(uniform, t8, {false, false}), DataError);
  const std::vector<int> bad{8, 0};
  CHECK_THROWS_AS(cross_entropy(uniform, bad, {true, true}), DimensionError);
}

TEST_CASE("backward: analytic examples and contract") {
  const Tensor x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  const Tensor z = Tensor::from({2}, {0, 0}, true);
  backward(slice_cols(softmax(z), 0, 1));
  CHECK(z.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(z.grad()[1] == doctest::Approx(-0.25).epsilon(1e-15));

  const Tensor v = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(scale(v, 2.0)), ContractError);
}

TEST_CASE("non-finite results are an error state") {
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), NumericError);
  CHECK_THROWS_AS(exp(Tensor::from({1}, {1000.0})), NumericError);
  CHECK_THROWS_AS(log(Tensor::from({1}, {0.0})), NumericError);
}

TEST_CASE("every differentiable op matches finite differences at 10 points") {
  Rng rng(0);
  for (const auto& c : tridx::testing::differentiable_op_cases()) {
    const double worst = tridx::testing::op_worst_error(c, rng);
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  }
}
