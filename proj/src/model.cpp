// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/model.hpp"

#include <sstream>

#include "tridx/error.hpp"
#include "tridx/tokenizer.hpp"

namespace tridx {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kWarmup: return "warmup";
    case Stage::kPt: return "pt";
    case Stage::kSft: return "sft";
    case Stage::kRft: return "rft";
  }
  return "?";
}

Stage stage_from_name(std::string_view name) {
  if (name == "pt") return Stage::kPt;
  if (name == "sft") return Stage::kSft;
  if (name == "rft") return Stage::kRft;
  throw UsageError("unknown stage '" + std::string(name) + "', expected pt, sft or rft");
}

void ModelConfig::validate() const {
  encoder.validate();
  fusion.validate();
  lm.validate();
  if (encoder.d != fusion.d || encoder.d != lm.d) {
    throw ConfigError("projector width " + std::to_string(encoder.d) + ", fusion width " + std::to_string(fusion.d) +
                      " and lm width " + std::to_string(lm.d) + " must agree");
  }
  if (lm.vocab != static_cast<std::size_t>(tok::kVocab)) {
    throw ConfigError("lm vocabulary must be " + std::to_string(tok::kVocab) + " for the character tokenizer");
  }
}

std::string ModelConfig::canonical() const {
  std::ostringstream o;
  o.precision(17);
  const auto& e = encoder;
  o << "encoder.ecg=" << e.ecg_leads << 'x' << e.ecg_samples << " conv " << e.ecg_channels << ':' << e.ecg_kernel1 << '/'
    << e.ecg_stride1 << ' ' << e.ecg_kernel2 << '/' << e.ecg_stride2 << '\n';
  o << "encoder.cxr=" << e.cxr_channels << 'x' << e.cxr_height << 'x' << e.cxr_width << " patch " << e.patch << '\n';
  o << "encoder.hidden=" << e.hidden << "\nencoder.tokens=" << e.tokens << "\nencoder.d=" << e.d << '\n';
  o << "fusion.heads=" << fusion.heads << "\nfusion.per_pass_params=" << fusion.per_pass_params
    << "\nfusion.vector_gates=" << fusion.vector_gates << '\n';
  o << "lm.vocab=" << lm.vocab << "\nlm.layers=" << lm.layers << "\nlm.heads=" << lm.heads << "\nlm.ffn=" << lm.ffn
    << "\nlm.context=" << lm.context << "\nlm.lora_rank=" << lm.lora_rank << "\nlm.lora_alpha=" << lm.lora_alpha << '\n';
  o << "train_encoders=" << train_encoders << "\nseed=" << seed << '\n';
  return o.str();
}

SplicedInput splice(const TinyLM& lm, std::span<const int> prompt, std::span<const int> answer,
                    const std::array<Tensor, 3>& blocks, std::size_t text_blocks) {
  std::array<int, 3> seen{0, 0, 0};
  for (int id : prompt) {
    if (Tokenizer::is_placeholder(id) && ++seen[static_cast<std::size_t>(id - tok::kEcg)] > 1) {
      throw ContractError("placeholder " + std::string(Tokenizer::special_text(id)) + " appears more than once");
    }
  }
  if (text_blocks == 0) {
    for (std::size_t m = 0; m < 3; ++m) {
      if (seen[m] != (blocks[m].defined() ? 1 : 0)) {
        throw ContractError(std::string(modality_name(static_cast<Modality>(m))) +
                            (seen[m] ? " placeholder has no modality tokens" : " tokens given without a placeholder"));
      }
    }
  }

  SplicedInput out;
  std::vector<Tensor> parts;
  std::vector<int> run{tok::kBos};
  out.ids.push_back(tok::kBos);
  const auto flush = [&] {
    if (!run.empty()) parts.push_back(lm.embed(run));
    run.clear();
  };
  for (int id : prompt) {
    if (!Tokenizer::is_placeholder(id)) {
      run.push_back(id);
      out.ids.push_back(id);
      continue;
    }
    if (text_blocks > 0) {
      for (std::size_t r = 0; r < text_blocks; ++r) {
        run.push_back(id);
        out.ids.push_back(id);
      }
      continue;
    }
    flush();
    const Tensor& b = blocks[static_cast<std::size_t>(id - tok::kEcg)];
    if (b.shape().size() != 2 || b.cols() != lm.config().d) {
      throw DimensionError("modality block must be m×" + std::to_string(lm.config().d) + ", got " + shape_str(b.shape()));
    }
    parts.push_back(b);
    out.ids.insert(out.ids.end(), b.rows(), id);
  }
  out.prefix_len = out.ids.size();
  for (int id : answer) {
    run.push_back(id);
    out.ids.push_back(id);
  }
  flush();
  out.answer_len = answer.size();
  out.x = parts.size() == 1 ? parts[0] : concat_rows(parts);
  const std::size_t n = out.ids.size();
  out.targets.resize(n);
  out.mask.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    out.targets[i] = i + 1 < n ? out.ids[i + 1] : tok::kEos;
    out.mask[i] = i + 1 >= out.prefix_len;
  }
  return out;
}

Tensor answer_nll(const TinyLM& lm, const SplicedInput& in) { return cross_entropy(lm.forward(in.x), in.targets, in.mask); }

Tensor completion_logprobs(const TinyLM& lm, std::span<const int> prompt, const std::array<Tensor, 3>& blocks,
                           std::span<const int> completion) {
  if (completion.empty()) throw ContractError("cannot score an empty completion");
  std::span<const int> body = completion;
  if (body.back() == tok::kEos) body = body.first(body.size() - 1);
  const SplicedInput in = splice(lm, prompt, body, blocks);
  const Tensor logits = slice_rows(lm.forward(in.x), in.prefix_len - 1, completion.size());
  return pick(log_softmax_rows(logits), completion);
}

TriModalModel::TriModalModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng enc_rng(derive_seed(cfg.seed, 1));
  Rng mpl_rng(derive_seed(cfg.seed, 2));
  Rng lm_rng(derive_seed(cfg.seed, 3));
  enc_ = std::make_unique<ModalityEncoders>(cfg.encoder, store_, enc_rng);
  mpl_ = std::make_unique<ModalityPerceptionLayer>(cfg.fusion, store_, mpl_rng);
  lm_ = std::make_unique<TinyLM>(cfg.lm, store_, lm_rng);
}

std::array<Tensor, 3> TriModalModel::project(const ModalityBundle& bundle) const {
  std::array<Tensor, 3> z;
  for (Modality m : kModalities) {
    if (bundle.has(m)) z[static_cast<std::size_t>(m)] = enc_->project(enc_->encode(bundle, m), m);
  }
  return z;
}

std::array<Tensor, 3> TriModalModel::lm_blocks(const std::array<Tensor, 3>& z, const FusionAblation& ablation) const {
  const int present = z[0].defined() + z[1].defined() + z[2].defined();
  if (present == 3) return mpl_->forward(z, ablation).t;
  if (present == 1 && !ablation.any()) return z;
  throw ContractError(present == 1 ? "ablations apply to tri-modal inputs only"
                                   : "inputs must carry one modality or all three");
}

void TriModalModel::set_stage(Stage stage) {
  const bool enc = cfg_.train_encoders;
  store_.set_trainable([stage, enc](const std::string& n) {
    const auto has = [&n](std::string_view p) { return n.starts_with(p); };
    switch (stage) {
      case Stage::kWarmup: return has("lm.");
      case Stage::kPt: return has("proj.") || has("lora.") || (enc && has("enc."));
      case Stage::kSft:
      case Stage::kRft: return has("mpl.") || has("lora.");
    }
    return false;
  });
}

namespace {

Tensor mean_answer_loss(const TriModalModel& model, std::span<const Example> batch, int want,
                        const FusionAblation& ablation) {
  if (batch.empty()) throw DataError("empty training batch");
  Tensor total;
  for (const auto& ex : batch) {
    const int present = ex.z[0].defined() + ex.z[1].defined() + ex.z[2].defined();
    if (present != want) {
      throw DataError(want == 1 ? "physiological-level example must carry exactly one modality"
                                : "disease-level example is missing a modality");
    }
    if (ex.answer.empty()) throw DataError("example has no answer tokens");
    const Tensor l = answer_nll(model.lm(), splice(model.lm(), ex.prompt, ex.answer, model.lm_blocks(ex.z, ablation)));
    total = total.defined() ? add(total, l) : l;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

Tensor loss_pt(const TriModalModel& model, std::span<const Example> batch) {
  return mean_answer_loss(model, batch, 1, {});
}

Tensor loss_sft(const TriModalModel& model, std::span<const Example> batch, const FusionAblation& ablation) {
  return mean_answer_loss(model, batch, 3, ablation);
}

}  // namespace tridx
