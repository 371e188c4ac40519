// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/params.hpp"

#include <cmath>

#include "tridx/error.hpp"
#include "tridx/random.hpp"

namespace tridx {

Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, value);
  return value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

void ParamStore::set_trainable(const std::function<bool(const std::string&)>& pred) {
  for (auto& [name, t] : entries_) {
    Tensor handle = t;
    handle.set_requires_grad(pred(name));
  }
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [_, t] : entries_) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : entries_) {
    if (t.requires_grad()) out.push_back(name);
  }
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : entries_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (const auto& [name, src] : other.entries()) {
    if (!contains(name)) throw ContractError("parameter " + name + " has no counterpart");
    Tensor dst = get(name);
    if (dst.shape() != src.shape()) {
      throw DimensionError("parameter " + name + " shape " + shape_str(src.shape()) + " vs " + shape_str(dst.shape()));
    }
    auto d = dst.mutable_values();
    auto s = src.values();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k];
    auto w = p.mutable_values();
    const bool has = p.has_grad();
    const auto g = has ? p.mutable_grad() : std::span<double>{};
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? g[i] * clip : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
    p.zero_grad();
  }
  return norm;
}

}  // namespace tridx
