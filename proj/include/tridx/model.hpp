// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// The full tri-modal model: encoders and projectors, the perception layer and
// the language model, plus placeholder splicing and the masked answer losses.

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tridx/encoders.hpp"
#include "tridx/fusion.hpp"
#include "tridx/lm.hpp"
#include "tridx/params.hpp"

namespace tridx {

enum class Stage { kWarmup, kPt, kSft, kRft };
std::string_view stage_name(Stage s);
/// Accepts "pt", "sft" and "rft".
Stage stage_from_name(std::string_view name);

struct ModelConfig {
  EncoderConfig encoder;
  FusionConfig fusion;
  LmConfig lm;
  bool train_encoders = true;  // encoders join the PT trainable set
  std::uint64_t seed = 0;

  void validate() const;
  /// Canonical key=value text of every field; hashed into checkpoints.
  std::string canonical() const;
};

/// Embedded LM input with placeholders replaced by modality token blocks.
struct SplicedInput {
  Tensor x;                    // n×d
  std::vector<int> ids;        // n; modality rows carry their placeholder id
  std::vector<int> targets;    // n; next-token ids
  std::vector<bool> mask;      // n; true where the target is an answer token or EOS
  std::size_t prefix_len = 0;  // rows before the first answer target
  std::size_t answer_len = 0;  // answer ids, EOS excluded
};

/// Layout: BOS, prompt (each placeholder expanded to its m-row block), answer.
/// The final answer row predicts EOS. `blocks` is indexed by Modality; a
/// placeholder without a block, or a block without a placeholder, is a
/// ContractError. With `text_blocks` set, placeholders are instead repeated m
/// times as ordinary tokens.
SplicedInput splice(const TinyLM& lm, std::span<const int> prompt, std::span<const int> answer,
                    const std::array<Tensor, 3>& blocks, std::size_t text_blocks = 0);

/// Mean cross-entropy over the masked positions.
Tensor answer_nll(const TinyLM& lm, const SplicedInput& in);

/// Per-token log-probabilities of `completion` after the spliced prompt
/// prefix; differentiable.
Tensor completion_logprobs(const TinyLM& lm, std::span<const int> prompt, const std::array<Tensor, 3>& blocks,
                           std::span<const int> completion);

/// One training example: tokenised prompt and answer plus projected blocks.
struct Example {
  std::vector<int> prompt;
  std::vector<int> answer;
  std::array<Tensor, 3> z;  // projected tokens, undefined where absent
};

class TriModalModel {
 public:
  explicit TriModalModel(const ModelConfig& cfg);

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const ModalityEncoders& encoders() const { return *enc_; }
  const ModalityPerceptionLayer& mpl() const { return *mpl_; }
  TinyLM& lm() { return *lm_; }
  const TinyLM& lm() const { return *lm_; }

  /// Projected m×d tokens for every modality the bundle carries.
  std::array<Tensor, 3> project(const ModalityBundle& bundle) const;
  /// Blocks handed to the LM. Single-modality inputs bypass the perception
  /// layer; complete tri-modal inputs go through it.
  std::array<Tensor, 3> lm_blocks(const std::array<Tensor, 3>& z, const FusionAblation& ablation = {}) const;

  /// Marks the parameters trained in `stage` as trainable.
  void set_stage(Stage stage);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  std::unique_ptr<ModalityEncoders> enc_;
  std::unique_ptr<ModalityPerceptionLayer> mpl_;
  std::unique_ptr<TinyLM> lm_;
};

/// Mean of the per-record answer losses. Every example must carry exactly one
/// modality (PT) or all three (SFT); otherwise DataError. Empty answers are a
/// DataError too.
Tensor loss_pt(const TriModalModel& model, std::span<const Example> batch);
Tensor loss_sft(const TriModalModel& model, std::span<const Example> batch, const FusionAblation& ablation = {});

}  // namespace tridx
