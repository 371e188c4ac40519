// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Modality perception layer. Three attention passes rotate the modality token
// blocks through the query/key/value roles,
//
//   pass 1: Q=ecg K=cxr V=lab    pass 2: Q=cxr K=lab V=ecg    pass 3: Q=lab K=ecg V=cxr
//
// and their average F is added residually to every block. A sigmoid gate over
// the mean-pooled, concatenated blocks then scales each modality.

#pragma once

#include <array>
#include <cstddef>

#include "tridx/attention.hpp"
#include "tridx/bundle.hpp"
#include "tridx/params.hpp"
#include "tridx/random.hpp"
#include "tridx/tensor.hpp"

namespace tridx {

struct FusionConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  bool per_pass_params = false;  // one attention parameter set per pass
  bool vector_gates = false;     // gate per feature (3d outputs) instead of per modality

  void validate() const;
};

struct FusionAblation {
  std::array<bool, 3> drop{false, false, false};  // indexed by Modality
  bool disable_cmha = false;                      // F = 0
  bool disable_cao = false;                       // gates = 1

  bool any() const { return drop[0] || drop[1] || drop[2] || disable_cmha || disable_cao; }
};

struct FusedBundle {
  std::array<Tensor, 3> m;  // z_x + F
  Tensor f_shared;
  std::array<Tensor, 3> t;  // gated blocks handed to the LM
  Tensor gates;             // 1×3, or 1×3d with vector gates
};

/// z + f, exact. Throws DimensionError on mismatched shapes.
Tensor residual_update(const Tensor& z, const Tensor& f);

class ModalityPerceptionLayer {
 public:
  ModalityPerceptionLayer(const FusionConfig& cfg, ParamStore& store, Rng& rng);

  /// The three pass outputs in pass order.
  std::array<Tensor, 3> cmha_passes(const Tensor& ze, const Tensor& zc, const Tensor& zl) const;
  Tensor cmha(const Tensor& ze, const Tensor& zc, const Tensor& zl) const;
  /// Returns {t_e, t_c, t_l} and writes the gate tensor.
  std::array<Tensor, 3> cao(const std::array<Tensor, 3>& m, Tensor* gates) const;

  FusedBundle forward(const std::array<Tensor, 3>& z, const FusionAblation& ablation = {}) const;

  const FusionConfig& config() const { return cfg_; }
  const AttentionWeights& attention(std::size_t pass) const { return attn_[cfg_.per_pass_params ? pass : 0]; }

 private:
  void check_blocks(const Tensor& ze, const Tensor& zc, const Tensor& zl) const;

  FusionConfig cfg_;
  std::array<AttentionWeights, 3> attn_;
  Tensor gate_w_, gate_b_;
};

}  // namespace tridx
