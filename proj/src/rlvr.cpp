// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/rlvr.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

#include "tridx/error.hpp"
#include "tridx/tokenizer.hpp"

namespace tridx {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + needle.size())) ++n;
  return n;
}

const std::regex& answer_block() {
  static const std::regex re("<answer>([\\s\\S]*?)</answer>");
  return re;
}

}  // namespace

std::string normalize_label(std::string_view s) {
  std::string out;
  bool gap = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      gap = true;
      continue;
    }
    if (gap && !out.empty()) out += ' ';
    gap = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

DiseaseSet make_disease_set(const std::vector<std::string>& names) {
  DiseaseSet s;
  for (const auto& n : names) {
    auto v = normalize_label(n);
    if (!v.empty()) s.insert(std::move(v));
  }
  return s;
}

std::string join_disease_set(const DiseaseSet& s) {
  std::string out;
  for (const auto& n : s) {
    if (!out.empty()) out += "; ";
    out += n;
  }
  return out;
}

std::optional<DiseaseSet> extract_answer_set(std::string_view completion) {
  const std::string text(completion);
  auto it = std::sregex_iterator(text.begin(), text.end(), answer_block());
  if (it == std::sregex_iterator() || std::next(it) != std::sregex_iterator()) return std::nullopt;
  DiseaseSet out;
  std::istringstream parts((*it)[1].str());
  std::string part;
  while (std::getline(parts, part, ';')) {
    auto v = normalize_label(part);
    if (!v.empty()) out.insert(std::move(v));
  }
  return out;
}

double jaccard_reward(const std::optional<DiseaseSet>& pred, const DiseaseSet& gold) {
  const DiseaseSet empty;
  const DiseaseSet& p = pred ? *pred : empty;
  std::size_t inter = 0;
  for (const auto& x : p) inter += gold.count(x);
  const std::size_t uni = p.size() + gold.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double format_reward(std::string_view completion) {
  const std::string_view s = trim(completion);
  for (std::string_view tag : {"<think>", "</think>", "<answer>", "</answer>"}) {
    if (count_of(s, tag) != 1) return 0.0;
  }
  static const std::regex re("<think>[\\s\\S]*</think>\\n<answer>[\\s\\S]*</answer>");
  return std::regex_match(s.begin(), s.end(), re) ? 1.0 : 0.0;
}

RewardReport score_completion(std::string_view completion, const DiseaseSet& gold) {
  RewardReport r;
  r.extracted = extract_answer_set(completion);
  r.format = format_reward(completion);
  r.jaccard = jaccard_reward(r.extracted, gold);
  r.total = r.format + r.jaccard;
  return r;
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw ConfigError("group normalisation needs at least 2 completions, got " + std::to_string(rewards.size()));
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  bool equal = true;
  for (double r : rewards) {
    var += (r - mean) * (r - mean);
    equal = equal && r == rewards[0];
  }
  std::vector<double> a(rewards.size(), 0.0);
  if (equal) return a;
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (rewards[i] - mean) / (sd + 1e-8);
  return a;
}

double kl_token(double logp_theta, double logp_ref) {
  const double d = logp_ref - logp_theta;
  return std::max(0.0, std::expm1(d) - d);
}

Tensor kl_tokens(const Tensor& logp_theta, std::span<const double> logp_ref) {
  if (logp_ref.size() != logp_theta.size()) throw DimensionError("kl_tokens: reference length differs");
  const Tensor d = sub(Tensor::from(logp_theta.shape(), {logp_ref.begin(), logp_ref.end()}), logp_theta);
  return add_scalar(sub(exp(d), d), -1.0);
}

namespace {

std::string group_dump(std::size_t step, std::size_t prompt, const std::vector<Sampled>& group,
                       const std::vector<RewardReport>& rewards) {
  std::ostringstream o;
  o << "non-finite rft loss at step " << step << ", prompt " << prompt << '\n';
  for (std::size_t i = 0; i < group.size(); ++i) {
    o << "  [" << i << "] reward " << rewards[i].total << " len " << group[i].ids.size() << ": " << group[i].text
      << '\n';
  }
  return o.str();
}

}  // namespace

RftStepMetrics rft_step(Policy& policy, Adam& opt, std::span<const std::size_t> prompts, const RftConfig& cfg,
                        std::uint64_t seed, std::size_t step) {
  if (prompts.empty()) throw ConfigError("rft step needs at least one prompt");
  if (cfg.group < 2) throw ConfigError("rft group size must be at least 2");
  if (cfg.inner_epochs == 0) throw ConfigError("rft inner epochs must be positive");

  struct Group {
    std::size_t prompt;
    std::vector<Sampled> samples;
    std::vector<RewardReport> rewards;
    std::vector<double> adv;
    std::vector<std::vector<double>> ref;
  };
  std::vector<Group> groups;
  RftStepMetrics m;
  m.step = step;
  const double gb = static_cast<double>(cfg.group * prompts.size());
  for (std::size_t b = 0; b < prompts.size(); ++b) {
    Group g;
    g.prompt = prompts[b];
    g.samples = policy.sample(g.prompt, cfg.group, derive_seed(derive_seed(seed, step), b));
    if (g.samples.size() != cfg.group) throw ContractError("policy returned the wrong number of samples");
    std::vector<double> totals;
    for (const auto& s : g.samples) {
      if (s.ids.empty()) throw ContractError("policy produced an empty completion");
      g.rewards.push_back(policy.reward(g.prompt, s));
      totals.push_back(g.rewards.back().total);
      m.mean_reward += g.rewards.back().total / gb;
      m.mean_jaccard += g.rewards.back().jaccard / gb;
      m.format_rate += g.rewards.back().format / gb;
      g.ref.push_back(cfg.beta != 0.0 ? policy.reference_logprobs(g.prompt, s.ids) : std::vector<double>{});
    }
    g.adv = group_advantages(totals);
    groups.push_back(std::move(g));
  }

  for (std::size_t epoch = 0; epoch < cfg.inner_epochs; ++epoch) {
    double loss = 0.0, kl_sum = 0.0;
    for (const auto& g : groups) {
      for (std::size_t i = 0; i < g.samples.size(); ++i) {
        const Sampled& s = g.samples[i];
        const double a = g.adv[i];
        if (a == 0.0 && cfg.beta == 0.0) continue;
        const double inv_len = 1.0 / static_cast<double>(s.ids.size());
        try {
          const Tensor logp = policy.token_logprobs(g.prompt, s.ids);
          Tensor objective;
          if (cfg.inner_epochs == 1) {
            objective = scale(sum(logp), a);
          } else {
            // clipped surrogate: only tokens whose ratio is inside the trust
            // region, or moving against the advantage, carry gradient
            const Tensor ratio = exp(sub(logp, Tensor::from(logp.shape(), s.logprobs)));
            std::vector<double> w(ratio.size());
            double frozen = 0.0;
            for (std::size_t t = 0; t < w.size(); ++t) {
              const double r = ratio.at(t);
              const double clipped = std::clamp(r, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
              if (r * a <= clipped * a) {
                w[t] = a;
              } else {
                w[t] = 0.0;
                frozen += clipped * a;
              }
            }
            objective = add_scalar(sum(mul(ratio, Tensor::from(ratio.shape(), w))), frozen);
          }
          if (cfg.beta != 0.0) {
            const Tensor kl = kl_tokens(logp, g.ref[i]);
            kl_sum += sum(kl).item() * inv_len;
            objective = sub(objective, scale(sum(kl), cfg.beta));
          }
          const Tensor li = scale(objective, -inv_len / gb);
          if (!std::isfinite(li.item())) throw NumericError("loss term is not finite");
          loss += li.item();
          backward(li);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + "\n" + group_dump(step, g.prompt, g.samples, g.rewards));
        }
      }
    }
    if (epoch == 0) {
      m.loss = loss;
      m.mean_kl = kl_sum / gb;
    }
    const double norm = opt.step();
    if (epoch == 0) m.grad_norm = norm;
  }
  return m;
}

std::string metrics_json(const RftStepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["mean_reward"] = m.mean_reward;
  j["mean_jaccard"] = m.mean_jaccard;
  j["format_rate"] = m.format_rate;
  j["mean_kl"] = m.mean_kl;
  j["loss"] = m.loss;
  j["grad_norm"] = m.grad_norm;
  return j.dump();
}

LmPolicy::LmPolicy(const TriModalModel& policy, const TriModalModel& reference, std::vector<RftPrompt> prompts,
                   double temperature, std::size_t max_tokens)
    : policy_(policy), reference_(reference), prompts_(std::move(prompts)), temperature_(temperature),
      max_tokens_(max_tokens) {}

std::vector<Sampled> LmPolicy::sample(std::size_t prompt, std::size_t g, std::uint64_t seed) {
  NoGradGuard ng;
  const RftPrompt& p = prompts_.at(prompt);
  const Tensor prefix = splice(policy_.lm(), p.prompt, {}, policy_.lm_blocks(p.z)).x;
  std::vector<Sampled> out;
  for (std::size_t i = 0; i < g; ++i) {
    Completion c = generate(policy_.lm(), prefix, {temperature_, max_tokens_, derive_seed(seed, i)});
    Sampled s;
    s.text = Tokenizer::decode(c.ids);
    s.ids = std::move(c.ids);
    s.logprobs = std::move(c.logprobs);
    out.push_back(std::move(s));
  }
  return out;
}

Tensor LmPolicy::token_logprobs(std::size_t prompt, const std::vector<int>& ids) {
  const RftPrompt& p = prompts_.at(prompt);
  return completion_logprobs(policy_.lm(), p.prompt, policy_.lm_blocks(p.z), ids);
}

std::vector<double> LmPolicy::reference_logprobs(std::size_t prompt, const std::vector<int>& ids) {
  NoGradGuard ng;
  const RftPrompt& p = prompts_.at(prompt);
  const Tensor lp = completion_logprobs(reference_.lm(), p.prompt, reference_.lm_blocks(p.z), ids);
  return {lp.values().begin(), lp.values().end()};
}

RewardReport LmPolicy::reward(std::size_t prompt, const Sampled& s) {
  return score_completion(s.text, prompts_.at(prompt).gold);
}

}  // namespace tridx
