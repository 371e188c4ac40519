// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm decoder-only transformer with learned positions and low-rank
// adapters on every attention and feed-forward matrix. A weight W (d_in×d_out,
// applied as x·W) with adapter pair A (r×d_in), B (d_out×r) is used as
//
//   W + (alpha / r) · (B·A)ᵀ
//
// B starts at zero, so a fresh adapter leaves the base model untouched.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tridx/attention.hpp"
#include "tridx/params.hpp"
#include "tridx/random.hpp"
#include "tridx/tensor.hpp"

namespace tridx {

struct LmConfig {
  std::size_t vocab = 256;
  std::size_t d = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t context = 1024;
  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;

  void validate() const;
};

class TinyLM {
 public:
  enum Adapted { kQ = 0, kK, kV, kO, kUp, kDown };

  TinyLM(const LmConfig& cfg, ParamStore& store, Rng& rng);

  Tensor embed(std::span<const int> ids) const;
  /// t×d input embeddings (positions are added here) -> t×vocab logits.
  /// Throws ContextError when t exceeds the context.
  Tensor forward(const Tensor& x) const;

  /// With adapters off the base weights are used as they are.
  void set_adapters_enabled(bool on) { adapters_ = on; }
  bool adapters_enabled() const { return adapters_; }

  const LmConfig& config() const { return cfg_; }

  struct LoraPair {
    Tensor a, b;
  };
  struct Layer {
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor wq, wk, wv, wo;
    Tensor w1, b1, w2, b2;
    std::array<LoraPair, 6> lora;
  };
  const std::vector<Layer>& layers() const { return layers_; }
  const Tensor& token_embedding() const { return tok_emb_; }
  const Tensor& position_embedding() const { return pos_emb_; }
  const Tensor& final_gain() const { return lnf_g_; }
  const Tensor& final_bias() const { return lnf_b_; }
  const Tensor& head() const { return head_; }

  /// Effective weight for one adapted matrix of one layer.
  Tensor effective(std::size_t layer, Adapted which) const;

 private:
  LmConfig cfg_;
  bool adapters_ = true;
  Tensor tok_emb_, pos_emb_, lnf_g_, lnf_b_, head_;
  std::vector<Layer> layers_;
};

/// Gradient-free incremental decoder with cached keys and values. Feeding rows
/// one at a time reproduces TinyLM::forward row by row.
class IncrementalDecoder {
 public:
  explicit IncrementalDecoder(const TinyLM& lm);
  ~IncrementalDecoder();
  IncrementalDecoder(const IncrementalDecoder&) = delete;
  IncrementalDecoder& operator=(const IncrementalDecoder&) = delete;

  /// Appends one d-wide input row and returns the logits at that position.
  std::vector<double> step(std::span<const double> x);
  /// Feeds every row of a t×d matrix; returns the logits of the last one.
  std::vector<double> prefill(const Tensor& x);
  std::size_t length() const { return n_; }

 private:
  struct State;
  State* s_;
  std::size_t n_ = 0;
};

struct SampleConfig {
  double temperature = 1.0;  // <= 0 selects the argmax token
  std::size_t max_tokens = 256;
  std::uint64_t seed = 0;
};

struct Completion {
  std::vector<int> ids;          // generated tokens, EOS included when produced
  std::vector<double> logprobs;  // untempered log-softmax of each generated token
  bool stopped = false;          // EOS produced
};

/// Ancestral sampling after a spliced prefix. Deterministic in the seed.
Completion generate(const TinyLM& lm, const Tensor& prefix, const SampleConfig& cfg);

/// log-softmax of `logits` (one row) at `id`.
double log_softmax_at(std::span<const double> logits, int id);

}  // namespace tridx
