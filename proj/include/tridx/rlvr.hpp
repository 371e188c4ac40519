// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Verifiable rewards and group-relative policy optimisation.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tridx/model.hpp"
#include "tridx/params.hpp"
#include "tridx/tensor.hpp"

namespace tridx {

/// Normalised disease names: lowercase, trimmed, single spaces.
using DiseaseSet = std::set<std::string>;

std::string normalize_label(std::string_view s);
DiseaseSet make_disease_set(const std::vector<std::string>& names);
/// "a; b" for the canonical ordering of the set.
std::string join_disease_set(const DiseaseSet& s);

/// Set from the single <answer>…</answer> block; nullopt when there is none
/// or more than one.
std::optional<DiseaseSet> extract_answer_set(std::string_view completion);
/// |p ∩ g| / |p ∪ g|, 0 when the union is empty; a missing prediction counts as ∅.
double jaccard_reward(const std::optional<DiseaseSet>& pred, const DiseaseSet& gold);
/// 1 iff the trimmed text is <think>…</think>\n<answer>…</answer> exactly.
double format_reward(std::string_view completion);

struct RewardReport {
  double format = 0.0;
  double jaccard = 0.0;
  double total = 0.0;
  std::optional<DiseaseSet> extracted;
};
RewardReport score_completion(std::string_view completion, const DiseaseSet& gold);

/// (r - mean) / (population std + 1e-8); zeros when every reward is equal.
/// Throws ConfigError for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards);

/// ρ - log ρ - 1 with ρ = exp(logp_ref - logp_theta).
double kl_token(double logp_theta, double logp_ref);
/// Differentiable per-token form of kl_token.
Tensor kl_tokens(const Tensor& logp_theta, std::span<const double> logp_ref);

struct Sampled {
  std::vector<int> ids;
  std::vector<double> logprobs;
  std::string text;
};

/// What the optimiser needs from a policy. Prompts are addressed by index.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::vector<Sampled> sample(std::size_t prompt, std::size_t g, std::uint64_t seed) = 0;
  /// Differentiable log-probabilities of `ids` under the current parameters.
  virtual Tensor token_logprobs(std::size_t prompt, const std::vector<int>& ids) = 0;
  virtual std::vector<double> reference_logprobs(std::size_t prompt, const std::vector<int>& ids) = 0;
  virtual RewardReport reward(std::size_t prompt, const Sampled& s) = 0;
};

struct RftConfig {
  std::size_t group = 8;
  double beta = 0.04;
  std::size_t inner_epochs = 1;  // > 1 switches to the clipped-ratio surrogate
  double clip_epsilon = 0.2;
};

struct RftStepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_jaccard = 0.0;
  double format_rate = 0.0;
  double mean_kl = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// One update: G samples per prompt, rewards, advantages and
///   loss = -1/(G·B) Σ_i 1/|o_i| Σ_t [A_i·log π(o_it) - β·kl_it]
/// followed by one optimiser step per inner epoch. A non-finite loss raises
/// NumericError carrying the offending group.
RftStepMetrics rft_step(Policy& policy, Adam& opt, std::span<const std::size_t> prompts, const RftConfig& cfg,
                        std::uint64_t seed, std::size_t step);

/// {"step":…,"mean_reward":…,"mean_jaccard":…,"format_rate":…,"mean_kl":…,"loss":…}
std::string metrics_json(const RftStepMetrics& m);

/// A prompt for the language-model policy.
struct RftPrompt {
  std::vector<int> prompt;
  std::array<Tensor, 3> z;  // frozen projected tokens
  DiseaseSet gold;
};

/// Policy backed by the tri-modal model, scored against a frozen reference.
class LmPolicy : public Policy {
 public:
  LmPolicy(const TriModalModel& policy, const TriModalModel& reference, std::vector<RftPrompt> prompts,
           double temperature, std::size_t max_tokens);

  std::vector<Sampled> sample(std::size_t prompt, std::size_t g, std::uint64_t seed) override;
  Tensor token_logprobs(std::size_t prompt, const std::vector<int>& ids) override;
  std::vector<double> reference_logprobs(std::size_t prompt, const std::vector<int>& ids) override;
  RewardReport reward(std::size_t prompt, const Sampled& s) override;

  std::size_t size() const { return prompts_.size(); }

 private:
  const TriModalModel& policy_;
  const TriModalModel& reference_;
  std::vector<RftPrompt> prompts_;
  double temperature_;
  std::size_t max_tokens_;
};

}  // namespace tridx
