// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checker shared by the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tridx/random.hpp"
#include "tridx/tensor.hpp"

namespace tridx::testing {

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

inline double rel_err(double analytic, double fd) { return std::abs(analytic - fd) / (std::abs(fd) + 1e-8); }

/// Compares backward() against (f(x+h) - f(x-h)) / 2h for every element of
/// every input. `f` must return a one-element tensor.
inline GradCheck gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                           double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  backward(f(inputs));
  GradCheck out;
  for (auto& t : inputs) {
    const std::vector<double> analytic = t.grad();
    auto vals = t.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      double fp, fm;
      {
        NoGradGuard ng;
        vals[i] = saved + h;
        fp = f(inputs).item();
        vals[i] = saved - h;
        fm = f(inputs).item();
      }
      vals[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[i], fd));
      ++out.checked;
    }
  }
  return out;
}

/// Same, but only at the listed (input, element) coordinates.
inline GradCheck gradcheck_at(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                              const std::vector<std::pair<std::size_t, std::size_t>>& coords, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  GradCheck out;
  for (auto [k, i] : coords) {
    const double analytic = inputs[k].grad()[i];
    auto vals = inputs[k].mutable_values();
    const double saved = vals[i];
    double fp, fm;
    {
      NoGradGuard ng;
      vals[i] = saved + h;
      fp = f().item();
      vals[i] = saved - h;
      fm = f().item();
    }
    vals[i] = saved;
    out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic, (fp - fm) / (2.0 * h)));
    ++out.checked;
  }
  for (auto& t : inputs) t.zero_grad();
  return out;
}

/// Random fixed weights turn any tensor into a scalar with generic gradients.
inline Tensor project_to_scalar(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, randn(y.shape(), 1.0, rng, false)));
}

}  // namespace tridx::testing
