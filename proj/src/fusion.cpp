// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/fusion.hpp"

#include <cmath>
#include <string>

#include "tridx/error.hpp"

namespace tridx {

void FusionConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ConfigError("fusion width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
}

Tensor residual_update(const Tensor& z, const Tensor& f) {
  if (z.shape() != f.shape()) throw DimensionError("residual of " + shape_str(z.shape()) + " and " + shape_str(f.shape()));
  return add(z, f);
}

ModalityPerceptionLayer::ModalityPerceptionLayer(const FusionConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg.d;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  const std::size_t sets = cfg.per_pass_params ? 3 : 1;
  for (std::size_t p = 0; p < sets; ++p) {
    const std::string pre = cfg.per_pass_params ? "mpl.attn" + std::to_string(p + 1) : std::string("mpl.attn");
    attn_[p].wq = store.add(pre + ".wq", randn({d, d}, s, rng));
    attn_[p].wk = store.add(pre + ".wk", randn({d, d}, s, rng));
    attn_[p].wv = store.add(pre + ".wv", randn({d, d}, s, rng));
    attn_[p].wo = store.add(pre + ".wo", randn({d, d}, s, rng));
  }
  // zero gate map: every gate starts at exactly 0.5
  const std::size_t outs = cfg.vector_gates ? 3 * d : 3;
  gate_w_ = store.add("mpl.cao.w", Tensor::zeros({3 * d, outs}, true));
  gate_b_ = store.add("mpl.cao.b", Tensor::zeros({outs}, true));
}

void ModalityPerceptionLayer::check_blocks(const Tensor& ze, const Tensor& zc, const Tensor& zl) const {
  const Shape& s = ze.shape();
  if (s.size() != 2 || s[1] != cfg_.d || zc.shape() != s || zl.shape() != s) {
    throw DimensionError("modality blocks must share one m×" + std::to_string(cfg_.d) + " shape, got " +
                         shape_str(ze.shape()) + ", " + shape_str(zc.shape()) + ", " + shape_str(zl.shape()));
  }
}

std::array<Tensor, 3> ModalityPerceptionLayer::cmha_passes(const Tensor& ze, const Tensor& zc, const Tensor& zl) const {
  check_blocks(ze, zc, zl);
  const std::size_t h = cfg_.heads;
  return {multi_head_attention(ze, zc, zl, h, attention(0)), multi_head_attention(zc, zl, ze, h, attention(1)),
          multi_head_attention(zl, ze, zc, h, attention(2))};
}

Tensor ModalityPerceptionLayer::cmha(const Tensor& ze, const Tensor& zc, const Tensor& zl) const {
  const auto p = cmha_passes(ze, zc, zl);
  return scale(add(add(p[0], p[1]), p[2]), 1.0 / 3.0);
}

std::array<Tensor, 3> ModalityPerceptionLayer::cao(const std::array<Tensor, 3>& m, Tensor* gates) const {
  check_blocks(m[0], m[1], m[2]);
  const Tensor pooled = concat_cols({mean_rows(m[0]), mean_rows(m[1]), mean_rows(m[2])});
  const Tensor g = sigmoid(linear(pooled, gate_w_, gate_b_));
  if (gates) *gates = g;
  std::array<Tensor, 3> t;
  for (std::size_t x = 0; x < 3; ++x) {
    t[x] = cfg_.vector_gates ? mul_row(m[x], slice_cols(g, x * cfg_.d, cfg_.d)) : mul_scalar(m[x], slice_cols(g, x, 1));
  }
  return t;
}

FusedBundle ModalityPerceptionLayer::forward(const std::array<Tensor, 3>& z_in, const FusionAblation& ab) const {
  check_blocks(z_in[0], z_in[1], z_in[2]);
  std::array<Tensor, 3> z = z_in;
  for (std::size_t x = 0; x < 3; ++x) {
    if (ab.drop[x]) z[x] = Tensor::zeros(z_in[x].shape());
  }
  FusedBundle out;
  out.f_shared = ab.disable_cmha ? Tensor::zeros(z[0].shape()) : cmha(z[0], z[1], z[2]);
  for (std::size_t x = 0; x < 3; ++x) out.m[x] = residual_update(z[x], out.f_shared);
  if (ab.disable_cao) {
    out.t = out.m;
    out.gates = Tensor::full({1, cfg_.vector_gates ? 3 * cfg_.d : 3}, 1.0);
  } else {
    out.t = cao(out.m, &out.gates);
  }
  return out;
}

}  // namespace tridx
