// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/lm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tridx/error.hpp"
#include "tridx/tokenizer.hpp"

namespace tridx {

void LmConfig::validate() const {
  if (vocab == 0 || d == 0 || layers == 0 || ffn == 0 || context == 0) throw ConfigError("lm extents must be positive");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("lm width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (lora_rank == 0) throw ConfigError("lora rank must be positive");
}

TinyLM::TinyLM(const LmConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg.d, f = cfg.ffn, r = cfg.lora_rank;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  const double resid = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.layers));

  tok_emb_ = store.add("lm.tok_emb", randn({cfg.vocab, d}, 0.1, rng));
  pos_emb_ = store.add("lm.pos_emb", randn({cfg.context, d}, 0.02, rng));
  layers_.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "lm.l" + std::to_string(l) + ".";
    Layer& L = layers_[l];
    L.ln1_g = store.add(p + "ln1.g", Tensor::full({d}, 1.0, true));
    L.ln1_b = store.add(p + "ln1.b", Tensor::zeros({d}, true));
    L.wq = store.add(p + "wq", randn({d, d}, sd, rng));
    L.wk = store.add(p + "wk", randn({d, d}, sd, rng));
    L.wv = store.add(p + "wv", randn({d, d}, sd, rng));
    L.wo = store.add(p + "wo", randn({d, d}, sd * resid, rng));
    L.ln2_g = store.add(p + "ln2.g", Tensor::full({d}, 1.0, true));
    L.ln2_b = store.add(p + "ln2.b", Tensor::zeros({d}, true));
    L.w1 = store.add(p + "w1", randn({d, f}, sd, rng));
    L.b1 = store.add(p + "b1", Tensor::zeros({f}, true));
    L.w2 = store.add(p + "w2", randn({f, d}, sf * resid, rng));
    L.b2 = store.add(p + "b2", Tensor::zeros({d}, true));
  }
  lnf_g_ = store.add("lm.lnf.g", Tensor::full({d}, 1.0, true));
  lnf_b_ = store.add("lm.lnf.b", Tensor::zeros({d}, true));
  head_ = store.add("lm.head", randn({d, cfg.vocab}, sd, rng));

  static constexpr std::array<const char*, 6> kNames{"wq", "wk", "wv", "wo", "w1", "w2"};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    Layer& L = layers_[l];
    const std::array<const Tensor*, 6> base{&L.wq, &L.wk, &L.wv, &L.wo, &L.w1, &L.w2};
    for (std::size_t k = 0; k < 6; ++k) {
      const std::size_t din = base[k]->rows(), dout = base[k]->cols();
      const std::string p = "lora.l" + std::to_string(l) + "." + kNames[k] + ".";
      L.lora[k].a = store.add(p + "A", randn({r, din}, 1.0 / std::sqrt(static_cast<double>(din)), rng));
      L.lora[k].b = store.add(p + "B", Tensor::zeros({dout, r}, true));
    }
  }
}

Tensor TinyLM::effective(std::size_t layer, Adapted which) const {
  const Layer& L = layers_.at(layer);
  const std::array<const Tensor*, 6> base{&L.wq, &L.wk, &L.wv, &L.wo, &L.w1, &L.w2};
  const Tensor& w = *base[which];
  if (!adapters_) return w;
  const auto& ad = L.lora[which];
  return add(w, scale(transpose(matmul(ad.b, ad.a)), cfg_.lora_alpha / static_cast<double>(cfg_.lora_rank)));
}

Tensor TinyLM::embed(std::span<const int> ids) const { return embedding(tok_emb_, ids); }

Tensor TinyLM::forward(const Tensor& x) const {
  const std::size_t t = x.rows();
  if (x.shape().size() != 2 || x.cols() != cfg_.d) {
    throw DimensionError("lm input must be t×" + std::to_string(cfg_.d) + ", got " + shape_str(x.shape()));
  }
  if (t > cfg_.context) {
    throw ContextError("sequence of " + std::to_string(t) + " positions exceeds the context of " +
                       std::to_string(cfg_.context));
  }
  Tensor h = add(x, slice_rows(pos_emb_, 0, t));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    const Tensor a = layer_norm(h, L.ln1_g, L.ln1_b);
    const AttentionWeights w{effective(l, kQ), effective(l, kK), effective(l, kV), effective(l, kO)};
    h = add(h, multi_head_attention(a, a, a, cfg_.heads, w, true));
    const Tensor f = layer_norm(h, L.ln2_g, L.ln2_b);
    h = add(h, linear(gelu(linear(f, effective(l, kUp), L.b1)), effective(l, kDown), L.b2));
  }
  return matmul(layer_norm(h, lnf_g_, lnf_b_), head_);
}

// ---- incremental decoding -------------------------------------------------

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

RowMat to_mat(const Tensor& t) {
  return Eigen::Map<const RowMat>(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                                  static_cast<Eigen::Index>(t.cols()));
}

RowVec to_vec(const Tensor& t) {
  return Eigen::Map<const RowVec>(t.values().data(), static_cast<Eigen::Index>(t.size()));
}

RowVec layer_norm_row(const RowVec& x, const RowVec& g, const RowVec& b) {
  const double m = static_cast<double>(x.size());
  double mu = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) mu += x[j];
  mu /= m;
  double var = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) var += (x[j] - mu) * (x[j] - mu);
  var /= m;
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  RowVec out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) out[j] = (x[j] - mu) * inv * g[j] + b[j];
  return out;
}

double gelu_scalar(double v) {
  constexpr double k = 0.7978845608028654;
  constexpr double c = 0.044715;
  return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v)));
}

}  // namespace

struct IncrementalDecoder::State {
  struct LayerState {
    RowVec ln1_g, ln1_b, ln2_g, ln2_b, b1, b2;
    RowMat wq, wk, wv, wo, w1, w2;
    RowMat keys, values;
  };
  std::size_t d = 0, heads = 0, context = 0;
  RowMat pos, head;
  RowVec lnf_g, lnf_b;
  std::vector<LayerState> layers;
};

IncrementalDecoder::IncrementalDecoder(const TinyLM& lm) : s_(new State) {
  NoGradGuard ng;
  const auto& cfg = lm.config();
  s_->d = cfg.d;
  s_->heads = cfg.heads;
  s_->context = cfg.context;
  s_->pos = to_mat(lm.position_embedding());
  s_->head = to_mat(lm.head());
  s_->lnf_g = to_vec(lm.final_gain());
  s_->lnf_b = to_vec(lm.final_bias());
  for (std::size_t l = 0; l < lm.layers().size(); ++l) {
    const auto& L = lm.layers()[l];
    State::LayerState st;
    st.ln1_g = to_vec(L.ln1_g);
    st.ln1_b = to_vec(L.ln1_b);
    st.ln2_g = to_vec(L.ln2_g);
    st.ln2_b = to_vec(L.ln2_b);
    st.b1 = to_vec(L.b1);
    st.b2 = to_vec(L.b2);
    st.wq = to_mat(lm.effective(l, TinyLM::kQ));
    st.wk = to_mat(lm.effective(l, TinyLM::kK));
    st.wv = to_mat(lm.effective(l, TinyLM::kV));
    st.wo = to_mat(lm.effective(l, TinyLM::kO));
    st.w1 = to_mat(lm.effective(l, TinyLM::kUp));
    st.w2 = to_mat(lm.effective(l, TinyLM::kDown));
    st.keys.resize(0, static_cast<Eigen::Index>(cfg.d));
    st.values.resize(0, static_cast<Eigen::Index>(cfg.d));
    s_->layers.push_back(std::move(st));
  }
}

IncrementalDecoder::~IncrementalDecoder() { delete s_; }

std::vector<double> IncrementalDecoder::step(std::span<const double> x) {
  const auto d = static_cast<Eigen::Index>(s_->d);
  if (x.size() != s_->d) throw DimensionError("decoder row must have " + std::to_string(s_->d) + " entries");
  if (n_ >= s_->context) throw ContextError("decoder reached the context of " + std::to_string(s_->context));
  const auto n = static_cast<Eigen::Index>(n_);
  RowVec h = Eigen::Map<const RowVec>(x.data(), d) + s_->pos.row(n);
  const Eigen::Index dh = d / static_cast<Eigen::Index>(s_->heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& L : s_->layers) {
    const RowVec a = layer_norm_row(h, L.ln1_g, L.ln1_b);
    const RowVec q = a * L.wq;
    L.keys.conservativeResize(n + 1, d);
    L.values.conservativeResize(n + 1, d);
    L.keys.row(n) = a * L.wk;
    L.values.row(n) = a * L.wv;
    RowVec joined(d);
    for (Eigen::Index hh = 0; hh < static_cast<Eigen::Index>(s_->heads); ++hh) {
      const auto off = hh * dh;
      Eigen::VectorXd sc = (L.keys.block(0, off, n + 1, dh) * q.segment(off, dh).transpose()) * scale;
      const double mx = sc.maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j <= n; ++j) z += (sc[j] = std::exp(sc[j] - mx));
      sc /= z;
      joined.segment(off, dh) = sc.transpose() * L.values.block(0, off, n + 1, dh);
    }
    h += joined * L.wo;
    const RowVec f = layer_norm_row(h, L.ln2_g, L.ln2_b);
    RowVec up = f * L.w1 + L.b1;
    for (Eigen::Index j = 0; j < up.size(); ++j) up[j] = gelu_scalar(up[j]);
    h += up * L.w2 + L.b2;
  }
  const RowVec logits = layer_norm_row(h, s_->lnf_g, s_->lnf_b) * s_->head;
  ++n_;
  std::vector<double> out(logits.data(), logits.data() + logits.size());
  for (double v : out)
    if (!std::isfinite(v)) throw NumericError("decoder produced a non-finite logit");
  return out;
}

std::vector<double> IncrementalDecoder::prefill(const Tensor& x) {
  if (x.rows() == 0) throw ContractError("prefill needs at least one row");
  std::vector<double> last;
  const auto v = x.values();
  for (std::size_t i = 0; i < x.rows(); ++i) last = step(v.subspan(i * x.cols(), x.cols()));
  return last;
}

double log_softmax_at(std::span<const double> logits, int id) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return logits[static_cast<std::size_t>(id)] - mx - std::log(z);
}

Completion generate(const TinyLM& lm, const Tensor& prefix, const SampleConfig& cfg) {
  IncrementalDecoder dec(lm);
  std::vector<double> logits = dec.prefill(prefix);
  Rng rng(cfg.seed);
  Completion out;
  const std::size_t budget = std::min(cfg.max_tokens, lm.config().context - prefix.rows());
  for (std::size_t k = 0; k < budget; ++k) {
    int id = 0;
    if (cfg.temperature <= 0.0) {
      id = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    } else {
      const double mx = *std::max_element(logits.begin(), logits.end());
      std::vector<double> w(logits.size());
      double z = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) z += (w[j] = std::exp((logits[j] - mx) / cfg.temperature));
      double u = rng.uniform() * z;
      id = static_cast<int>(w.size()) - 1;
      for (std::size_t j = 0; j < w.size(); ++j) {
        if ((u -= w[j]) < 0.0) {
          id = static_cast<int>(j);
          break;
        }
      }
    }
    out.ids.push_back(id);
    out.logprobs.push_back(log_softmax_at(logits, id));
    if (id == tok::kEos) {
      out.stopped = true;
      break;
    }
    if (k + 1 == budget) break;
    const auto row = lm.token_embedding().values().subspan(static_cast<std::size_t>(id) * lm.config().d, lm.config().d);
    logits = dec.step(row);
  }
  return out;
}

}  // namespace tridx
