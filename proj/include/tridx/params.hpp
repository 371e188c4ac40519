// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named parameter registry and the adaptive-moment optimiser.

#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tridx/tensor.hpp"

namespace tridx {

class ParamStore {
 public:
  /// Registers a leaf. Names are unique; insertion order is preserved.
  Tensor add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t parameter_count() const;

  /// Marks exactly the parameters accepted by `pred` as trainable.
  void set_trainable(const std::function<bool(const std::string&)>& pred);
  std::vector<Tensor> trainable() const;
  std::vector<std::string> trainable_names() const;
  void zero_grad();

  /// Copies values by name; shapes must agree and every name must exist here.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);
  /// Applies one update from the accumulated gradients, then clears them.
  /// Returns the pre-clip global gradient norm.
  double step();
  const AdamConfig& config() const { return cfg_; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace tridx
