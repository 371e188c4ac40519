// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "tridx/error.hpp"
#include "tridx/fusion.hpp"

using namespace tridx;
using tridx::testing::gradcheck;
using tridx::testing::project_to_scalar;

namespace {

using Mat = std::vector<double>;

Tensor rand_block(std::size_t m, std::size_t d, Rng& rng, bool grad = false) { return randn({m, d}, 1.0, rng, grad); }

void set_identity(Tensor t) {
  auto v = t.mutable_values();
  const std::size_t d = t.rows();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i / d == i % d) ? 1.0 : 0.0;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Mat mm(const Mat& a, const Tensor& w, std::size_t rows, std::size_t d) {
  Mat out(rows * d, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < d; ++t) out[i * d + j] += a[i * d + t] * w.at(t, j);
  return out;
}

// One attention pass written out head by head.
Mat oracle_pass(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const AttentionWeights& w) {
  const std::size_t m = q.rows(), d = q.cols(), dh = d / heads;
  const Mat qv(q.values().begin(), q.values().end()), kv(k.values().begin(), k.values().end()),
      vv(v.values().begin(), v.values().end());
  const Mat qp = mm(qv, w.wq, m, d), kp = mm(kv, w.wk, m, d), vp = mm(vv, w.wv, m, d);
  Mat cat(m * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < m; ++i) {
      Mat s(m);
      double mx = -1e300;
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += qp[i * d + h * dh + c] * kp[j * d + h * dh + c];
        s[j] = acc / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t c = 0; c < dh; ++c) cat[i * d + h * dh + c] += s[j] / z * vp[j * d + h * dh + c];
    }
  return mm(cat, w.wo, m, d);
}

}  // namespace

TEST_CASE("residual update is an exact sum") {
  Rng rng(1);
  const Tensor z = rand_block(4, 8, rng), f = rand_block(4, 8, rng);
  const Tensor m = residual_update(z, f);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.at(i) == z.at(i) + f.at(i));
  const Tensor zero = Tensor::zeros({4, 8});
  CHECK(max_abs_diff(residual_update(z, zero).values(), z.values()) == 0.0);
  CHECK(max_abs_diff(residual_update(zero, f).values(), f.values()) == 0.0);
  CHECK_THROWS_AS(residual_update(z, Tensor::zeros({3, 8})), DimensionError);
}

TEST_CASE("cmha matches a straight-line evaluation of the three passes") {
  ParamStore store;
  Rng rng(0);
  ModalityPerceptionLayer mpl({8, 2}, store, rng);
  const Tensor ze = rand_block(4, 8, rng), zc = rand_block(4, 8, rng), zl = rand_block(4, 8, rng);
  const auto& w = mpl.attention(0);
  const Mat p1 = oracle_pass(ze, zc, zl, 2, w), p2 = oracle_pass(zc, zl, ze, 2, w), p3 = oracle_pass(zl, ze, zc, 2, w);
  Mat f(p1.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = (p1[i] + p2[i] + p3[i]) / 3.0;
  CHECK(max_abs_diff(mpl.cmha(ze, zc, zl).values(), f) < 1e-12);
  const auto fused = mpl.forward({ze, zc, zl});
  for (std::size_t x = 0; x < 3; ++x) {
    const Tensor& z = x == 0 ? ze : x == 1 ? zc : zl;
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(fused.m[x].at(i) == z.at(i) + fused.f_shared.at(i));
  }
}

TEST_CASE("cyclic rotation of the inputs rotates the passes and leaves F unchanged") {
  ParamStore store;
  Rng rng(2);
  ModalityPerceptionLayer mpl({8, 2}, store, rng);
  const Tensor a = rand_block(4, 8, rng), b = rand_block(4, 8, rng), c = rand_block(4, 8, rng);
  const auto p = mpl.cmha_passes(a, b, c);
  const auto r = mpl.cmha_passes(b, c, a);
  CHECK(max_abs_diff(r[0].values(), p[1].values()) == 0.0);
  CHECK(max_abs_diff(r[1].values(), p[2].values()) == 0.0);
  CHECK(max_abs_diff(r[2].values(), p[0].values()) == 0.0);
  CHECK(max_abs_diff(mpl.cmha(a, b, c).values(), mpl.cmha(b, c, a).values()) < 1e-14);

  ParamStore s2;
  Rng rng2(2);
  ModalityPerceptionLayer separate({8, 2, true}, s2, rng2);
  CHECK(max_abs_diff(separate.cmha(a, b, c).values(), separate.cmha(b, c, a).values()) > 1e-6);
}

TEST_CASE("degenerate attention configurations") {
  ParamStore store;
  Rng rng(3);
  ModalityPerceptionLayer mpl({8, 2}, store, rng);
  for (auto* name : {"mpl.attn.wq", "mpl.attn.wk", "mpl.attn.wv", "mpl.attn.wo"}) set_identity(store.get(name));
  SUBCASE("one token per modality averages the three blocks") {
    const Tensor e = rand_block(1, 8, rng), c = rand_block(1, 8, rng), l = rand_block(1, 8, rng);
    const Tensor f = mpl.cmha(e, c, l);
    for (std::size_t i = 0; i < 8; ++i) CHECK(f.at(i) == doctest::Approx((l.at(i) + e.at(i) + c.at(i)) / 3.0).epsilon(1e-14));
  }
  SUBCASE("identical inputs give identical updated blocks") {
    const Tensor z = rand_block(4, 8, rng);
    const auto fused = mpl.forward({z, z, z});
    CHECK(max_abs_diff(fused.m[0].values(), fused.m[1].values()) == 0.0);
    CHECK(max_abs_diff(fused.m[1].values(), fused.m[2].values()) == 0.0);
  }
}

TEST_CASE("contribution gates") {
  ParamStore store;
  Rng rng(4);
  ModalityPerceptionLayer mpl({8, 2}, store, rng);
  const std::array<Tensor, 3> m{rand_block(4, 8, rng), rand_block(4, 8, rng), rand_block(4, 8, rng)};
  SUBCASE("zero gate map gives one half everywhere") {
    Tensor g;
    const auto t = mpl.cao(m, &g);
    CHECK(g.shape() == Shape{1, 3});
    for (std::size_t x = 0; x < 3; ++x) {
      CHECK(g.at(x) == 0.5);
      for (std::size_t i = 0; i < m[x].size(); ++i) CHECK(t[x].at(i) == 0.5 * m[x].at(i));
    }
  }
  SUBCASE("gates match a hand evaluation and stay in (0, 1)") {
    Rng wr(5);
    Tensor w = store.get("mpl.cao.w"), b = store.get("mpl.cao.b");
    for (auto& v : w.mutable_values()) v = wr.normal(0.0, 2.0);
    for (auto& v : b.mutable_values()) v = wr.normal(0.0, 1.0);
    Mat pooled(24, 0.0);
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t j = 0; j < 8; ++j) pooled[x * 8 + j] += m[x].at(r, j) / 4.0;
    Tensor g;
    const auto t = mpl.cao(m, &g);
    for (std::size_t x = 0; x < 3; ++x) {
      double acc = b.at(x);
      for (std::size_t i = 0; i < 24; ++i) acc += pooled[i] * w.at(i, x);
      const double expect = 1.0 / (1.0 + std::exp(-acc));
      CHECK(g.at(x) == doctest::Approx(expect).epsilon(1e-13));
      CHECK(g.at(x) > 0.0);
      CHECK(g.at(x) < 1.0);
      for (std::size_t i = 0; i < m[x].size(); ++i) CHECK(t[x].at(i) == g.at(x) * m[x].at(i));
    }
  }
  SUBCASE("a large aligned gate row saturates towards one") {
    Tensor w = store.get("mpl.cao.w");
    for (std::size_t j = 0; j < 8; ++j) {
      double p = 0.0;
      for (std::size_t r = 0; r < 4; ++r) p += m[0].at(r, j);
      w.mutable_values()[j * 3 + 0] = p > 0 ? 1e3 : -1e3;
    }
    Tensor g;
    const auto t = mpl.cao(m, &g);
    CHECK(g.at(0) > 1.0 - 1e-9);
    CHECK(max_abs_diff(t[0].values(), m[0].values()) < 1e-8);
    CHECK(g.at(1) == 0.5);
  }
  SUBCASE("vector gates scale each feature") {
    ParamStore s2;
    Rng r2(4);
    ModalityPerceptionLayer vec({8, 2, false, true}, s2, r2);
    Tensor g;
    const auto t = vec.cao(m, &g);
    CHECK(g.shape() == Shape{1, 24});
    CHECK(t[2].shape() == Shape{4, 8});
  }
}

TEST_CASE("ablations") {
  ParamStore store;
  Rng rng(6);
  ModalityPerceptionLayer mpl({8, 2}, store, rng);
  const std::array<Tensor, 3> z{rand_block(4, 8, rng), rand_block(4, 8, rng), rand_block(4, 8, rng)};
  FusionAblation ab;
  ab.drop[1] = true;
  auto f = mpl.forward(z, ab);
  CHECK(max_abs_diff(f.m[1].values(), f.f_shared.values()) == 0.0);
  ab = {};
  ab.disable_cmha = true;
  f = mpl.forward(z, ab);
  for (std::size_t x = 0; x < 3; ++x) CHECK(max_abs_diff(f.m[x].values(), z[x].values()) == 0.0);
  ab = {};
  ab.disable_cao = true;
  f = mpl.forward(z, ab);
  for (std::size_t x = 0; x < 3; ++x) {
    CHECK(f.gates.at(x) == 1.0);
    CHECK(max_abs_diff(f.t[x].values(), f.m[x].values()) == 0.0);
  }
  CHECK_THROWS_AS(mpl.forward({z[0], z[1], Tensor::zeros({3, 8})}), DimensionError);
  CHECK_THROWS_AS(mpl.forward({z[0], z[1], Tensor::zeros({4, 6})}), DimensionError);
  CHECK_THROWS_AS(ModalityPerceptionLayer({8, 3}, store, rng), ConfigError);
}

TEST_CASE("end-to-end gradients agree with finite differences") {
  for (bool vector_gates : {false, true}) {
    ParamStore store;
    Rng rng(7);
    ModalityPerceptionLayer mpl({8, 2, false, vector_gates}, store, rng);
    Rng wr(8);
    Tensor w = store.get("mpl.cao.w"), b = store.get("mpl.cao.b");
    for (auto& v : w.mutable_values()) v = wr.normal(0.0, 0.5);
    for (auto& v : b.mutable_values()) v = wr.normal(0.0, 0.5);
    std::vector<Tensor> inputs{rand_block(4, 8, rng, true), rand_block(4, 8, rng, true), rand_block(4, 8, rng, true)};
    for (const auto& [name, t] : store.entries()) inputs.push_back(t);
    auto f = [&](const std::vector<Tensor>& in) {
      const auto fused = mpl.forward({in[0], in[1], in[2]});
      return add(add(project_to_scalar(fused.t[0], 1), project_to_scalar(fused.t[1], 2)), project_to_scalar(fused.t[2], 3));
    };
    const auto gc = gradcheck(f, inputs);
    INFO("vector gates " << vector_gates << ", checked " << gc.checked);
    CHECK(gc.max_rel_err < 1e-4);
  }
}
