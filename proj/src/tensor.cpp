// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tridx/error.hpp"

namespace tridx {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

std::pair<std::size_t, std::size_t> rc(const Shape& s) {
  if (s.empty()) return {1, 1};
  if (s.size() == 1) return {1, s[0]};
  std::size_t c = 1;
  for (std::size_t i = 1; i < s.size(); ++i) c *= s[i];
  return {s[0], c};
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

/// Builds the result node; history is attached only when some input tracks gradients.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> fn) {
  check_finite(op, value);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

bool tracks(const detail::Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }
std::vector<double>& gbuf(detail::Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw DimensionError(std::string(op) + ": " + detail);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& x, F f, D dfdx) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [dfdx](detail::Node& self) {
    const auto& in = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < in.size(); ++i) g[i] += self.grad[i] * dfdx(in[i], self.value[i]);
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  std::vector<double> v(numel(shape), fill);
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  check_finite("tensor construction", values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return rc(node_->shape).first; }
std::size_t Tensor::cols() const { return rc(node_->shape).second; }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto [n, k] = rc(a.shape());
  const auto [k2, m] = rc(b.shape());
  require(k == k2, "matmul", "inner dims " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  std::vector<double> out(n * m);
  MutMap(out.data(), n, m).noalias() = ConstMap(a.values().data(), n, k) * ConstMap(b.values().data(), k, m);
  return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    ConstMap g(self.grad.data(), n, m);
    if (tracks(self, 0)) {
      MutMap(gbuf(self, 0).data(), n, k).noalias() += g * ConstMap(self.inputs[1]->value.data(), k, m).transpose();
    }
    if (tracks(self, 1)) {
      MutMap(gbuf(self, 1).data(), k, m).noalias() += ConstMap(self.inputs[0]->value.data(), n, k).transpose() * g;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto [n, k] = rc(a.shape());
  const auto [m, k2] = rc(b.shape());
  require(k == k2, "matmul_nt", "inner dims " + shape_str(a.shape()) + " · " + shape_str(b.shape()) + "ᵀ");
  std::vector<double> out(n * m);
  MutMap(out.data(), n, m).noalias() =
      ConstMap(a.values().data(), n, k) * ConstMap(b.values().data(), m, k).transpose();
  return make_result("matmul_nt", {n, m}, std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    ConstMap g(self.grad.data(), n, m);
    if (tracks(self, 0)) {
      MutMap(gbuf(self, 0).data(), n, k).noalias() += g * ConstMap(self.inputs[1]->value.data(), m, k);
    }
    if (tracks(self, 1)) {
      MutMap(gbuf(self, 1).data(), m, k).noalias() += g.transpose() * ConstMap(self.inputs[0]->value.data(), n, k);
    }
  });
}

Tensor transpose(const Tensor& x) {
  const auto [n, m] = rc(x.shape());
  std::vector<double> out(n * m);
  MutMap(out.data(), m, n) = ConstMap(x.values().data(), n, m).transpose();
  return make_result("transpose", {m, n}, std::move(out), {x}, [n, m](detail::Node& self) {
    MutMap(gbuf(self, 0).data(), n, m) += ConstMap(self.grad.data(), m, n).transpose();
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (bias.defined()) y = add_row(y, bias);
  return y;
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!tracks(self, k)) continue;
      auto& g = gbuf(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (tracks(self, 0)) {
      auto& g = gbuf(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (tracks(self, 1)) {
      auto& g = gbuf(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (tracks(self, 0)) {
      auto& g = gbuf(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (tracks(self, 1)) {
      auto& g = gbuf(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  const auto [n, m] = rc(x.shape());
  require(row.size() == m, "add_row", "row of " + std::to_string(row.size()) + " vs " + shape_str(x.shape()));
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto rv = row.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += rv[j];
  return make_result("add_row", x.shape(), std::move(out), {x, row}, [n, m](detail::Node& self) {
    if (tracks(self, 0)) {
      auto& g = gbuf(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (tracks(self, 1)) {
      auto& g = gbuf(self, 1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
    }
  });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  const auto [n, m] = rc(x.shape());
  require(row.size() == m, "mul_row", "row of " + std::to_string(row.size()) + " vs " + shape_str(x.shape()));
  std::vector<double> out(n * m);
  const auto xv = x.values(), rv = row.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = xv[i * m + j] * rv[j];
  return make_result("mul_row", x.shape(), std::move(out), {x, row}, [n, m](detail::Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& rv = self.inputs[1]->value;
    if (tracks(self, 0)) {
      auto& g = gbuf(self, 0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i * m + j] * rv[j];
    }
    if (tracks(self, 1)) {
      auto& g = gbuf(self, 1);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j] * xv[i * m + j];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  return unary("scale", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  require(s.size() == 1, "mul_scalar", "scale tensor must hold one element, got " + shape_str(s.shape()));
  const double c = s.at(0);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
  return make_result("mul_scalar", x.shape(), std::move(out), {x, s}, [](detail::Node& self) {
    const auto& xv = self.inputs[0]->value;
    const double c = self.inputs[1]->value[0];
    if (tracks(self, 0)) {
      auto& g = gbuf(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
    }
    if (tracks(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      gbuf(self, 1)[0] += acc;
    }
  });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  // tanh approximation
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
      [](double v, double) {
        const double u = k * (v + c * v * v * v);
        const double t = std::tanh(u);
        const double du = k * (1.0 + 3.0 * c * v * v);
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x,
               [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw NumericError("log of non-positive value");
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

// ---- normalisation and losses ---------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const auto& s = x.shape();
  const int nd = static_cast<int>(s.size());
  if (axis < 0) axis += nd;
  require(axis >= 0 && axis < nd, "softmax", "axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < nd; ++i) inner *= s[i];
  const std::size_t k = s[axis];
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * k * inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xv[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += (out[base + j * inner] = std::exp(xv[base + j * inner] - mx));
      for (std::size_t j = 0; j < k; ++j) out[base + j * inner] /= z;
    }
  }
  return make_result("softmax", s, std::move(out), {x}, [outer, inner, k](detail::Node& self) {
    auto& g = gbuf(self, 0);
    const auto& y = self.value;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * k * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t p = base + j * inner;
          g[p] += y[p] * (self.grad[p] - dot);
        }
      }
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  const auto [n, m] = rc(x.shape());
  const auto xv = x.values();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = xv.data() + i * m;
    const double mx = *std::max_element(r, r + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(r[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = r[j] - lz;
  }
  return make_result("log_softmax", x.shape(), std::move(out), {x}, [n, m](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < m; ++j) gs += self.grad[i * m + j];
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i * m + j] - std::exp(self.value[i * m + j]) * gs;
    }
  });
}

Tensor causal_softmax_rows(const Tensor& scores) {
  const auto [n, m] = rc(scores.shape());
  require(n <= m, "causal_softmax_rows", "more queries than keys " + shape_str(scores.shape()));
  const std::size_t offset = m - n;
  const auto xv = scores.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t last = i + offset;  // inclusive
    const double* r = xv.data() + i * m;
    double mx = r[0];
    for (std::size_t j = 1; j <= last; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j <= last; ++j) z += (out[i * m + j] = std::exp(r[j] - mx));
    for (std::size_t j = 0; j <= last; ++j) out[i * m + j] /= z;
  }
  return make_result("causal_softmax", scores.shape(), std::move(out), {scores}, [n, m, offset](detail::Node& self) {
    auto& g = gbuf(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t last = i + offset;
      double dot = 0.0;
      for (std::size_t j = 0; j <= last; ++j) dot += self.grad[i * m + j] * y[i * m + j];
      for (std::size_t j = 0; j <= last; ++j) g[i * m + j] += y[i * m + j] * (self.grad[i * m + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto [n, m] = rc(x.shape());
  require(gain.size() == m && bias.size() == m, "layer_norm", "affine params must have " + std::to_string(m) + " entries");
  const auto xv = x.values(), gv = gain.values(), bv = bias.values();
  std::vector<double> out(n * m), xhat(n * m), inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = xv.data() + i * m;
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += r[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat[i * m + j] = (r[j] - mu) * inv_std[i];
      out[i * m + j] = xhat[i * m + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [n, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        const auto& gv = self.inputs[1]->value;
        if (tracks(self, 0)) {
          auto& g = gbuf(self, 0);
          for (std::size_t i = 0; i < n; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double d = self.grad[i * m + j] * gv[j];
              s1 += d;
              s2 += d * xhat[i * m + j];
            }
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t j = 0; j < m; ++j) {
              const double d = self.grad[i * m + j] * gv[j];
              g[i * m + j] += inv_std[i] * (d - inv_m * s1 - xhat[i * m + j] * inv_m * s2);
            }
          }
        }
        if (tracks(self, 1)) {
          auto& g = gbuf(self, 1);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j] * xhat[i * m + j];
        }
        if (tracks(self, 2)) {
          auto& g = gbuf(self, 2);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& mask) {
  const auto [t, v] = rc(logits.shape());
  require(targets.size() == t && mask.size() == t, "cross_entropy",
          "targets/mask length must equal " + std::to_string(t) + " rows");
  std::size_t active = 0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) + " outside vocabulary of " +
                           std::to_string(v));
    }
    ++active;
  }
  if (active == 0) throw DataError("cross_entropy: every position is masked out (empty loss)");
  const auto lv = logits.values();
  std::vector<double> probs(t * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    const double* r = lv.data() + i * v;
    const double mx = *std::max_element(r, r + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += (probs[i * v + j] = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += -(r[targets[i]] - mx - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(active);
  std::vector<int> tg(targets.begin(), targets.end());
  return make_result("cross_entropy", {1}, {total * inv}, {logits},
                     [t, v, inv, mask, tg = std::move(tg), probs = std::move(probs)](detail::Node& self) {
                       auto& g = gbuf(self, 0);
                       const double s = self.grad[0] * inv;
                       for (std::size_t i = 0; i < t; ++i) {
                         if (!mask[i]) continue;
                         for (std::size_t j = 0; j < v; ++j) g[i * v + j] += s * probs[i * v + j];
                         g[i * v + tg[i]] -= s;
                       }
                     });
}

// ---- indexing and structure -----------------------------------------------

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  const auto [vocab, d] = rc(table.shape());
  require(!ids.empty(), "embedding", "no ids");
  std::vector<double> out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < vocab, "embedding",
            "id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab));
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result("embedding", {ids.size(), d}, std::move(out), {table}, [d, idv = std::move(idv)](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idv[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor pick(const Tensor& x, std::span<const int> idx) {
  const auto [n, m] = rc(x.shape());
  require(idx.size() == n, "pick", "need one index per row");
  std::vector<double> out(n);
  const auto xv = x.values();
  for (std::size_t i = 0; i < n; ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < m, "pick", "index out of range");
    out[i] = xv[i * m + idx[i]];
  }
  std::vector<int> iv(idx.begin(), idx.end());
  return make_result("pick", {n}, std::move(out), {x}, [m, iv = std::move(iv)](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t i = 0; i < iv.size(); ++i) g[i * m + iv[i]] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  const auto [n, m] = rc(x.shape());
  require(count > 0 && start + count <= n, "slice_rows", "range out of bounds for " + shape_str(x.shape()));
  const auto xv = x.values();
  std::vector<double> out(xv.begin() + start * m, xv.begin() + (start + count) * m);
  Shape s = x.shape().size() == 1 ? Shape{count} : Shape{count, m};
  if (x.shape().size() == 1) {
    require(start == 0 && count == 1, "slice_rows", "1-D tensors have a single row");
    s = x.shape();
  }
  return make_result("slice_rows", s, std::move(out), {x}, [start, m](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * m + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  const auto [n, m] = rc(x.shape());
  require(count > 0 && start + count <= m, "slice_cols", "range out of bounds for " + shape_str(x.shape()));
  const auto xv = x.values();
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(xv.data() + i * m + start, count, out.data() + i * count);
  Shape s = x.shape().size() == 1 ? Shape{count} : Shape{n, count};
  return make_result("slice_cols", s, std::move(out), {x}, [n, m, start, count](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * m + start + j] += self.grad[i * count + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows", "no parts");
  const std::size_t m = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require(p.cols() == m, "concat_rows", "column mismatch " + shape_str(p.shape()));
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * m);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result("concat_rows", {n, m}, std::move(out), parts, [offsets = std::move(offsets)](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (!tracks(self, k)) continue;
      auto& g = gbuf(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols", "no parts");
  const std::size_t n = parts[0].rows();
  std::size_t m = 0;
  std::vector<std::size_t> widths, starts;
  for (const auto& p : parts) {
    require(p.rows() == n, "concat_cols", "row mismatch " + shape_str(p.shape()));
    starts.push_back(m);
    widths.push_back(p.cols());
    m += p.cols();
  }
  std::vector<double> out(n * m);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].values();
    for (std::size_t i = 0; i < n; ++i) std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * m + starts[k]);
  }
  return make_result("concat_cols", {n, m}, std::move(out), parts,
                     [n, m, widths = std::move(widths), starts = std::move(starts)](detail::Node& self) {
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         if (!tracks(self, k)) continue;
                         auto& g = gbuf(self, k);
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * m + starts[k] + j];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(), "reshape", shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor frames(const Tensor& x, std::size_t k, std::size_t stride) {
  const auto [n, c] = rc(x.shape());
  require(k >= 1 && stride >= 1 && k <= n, "frames", "window " + std::to_string(k) + " over " + std::to_string(n) + " rows");
  const std::size_t out_rows = (n - k) / stride + 1;
  const std::size_t w = k * c;
  const auto xv = x.values();
  std::vector<double> out(out_rows * w);
  for (std::size_t r = 0; r < out_rows; ++r) std::copy_n(xv.data() + r * stride * c, w, out.data() + r * w);
  return make_result("frames", {out_rows, w}, std::move(out), {x}, [out_rows, w, stride, c](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (std::size_t r = 0; r < out_rows; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * stride * c + j] += self.grad[r * w + j];
  });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result("sum", {1}, {s}, {x}, [](detail::Node& self) {
    auto& g = gbuf(self, 0);
    for (auto& e : g) e += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mean_rows(const Tensor& x) { return segment_mean_rows(x, 1); }

Tensor segment_mean_rows(const Tensor& x, std::size_t segments) {
  const auto [n, m] = rc(x.shape());
  require(segments >= 1 && segments <= n, "segment_mean_rows",
          std::to_string(segments) + " segments over " + std::to_string(n) + " rows");
  std::vector<std::size_t> bounds(segments + 1);
  for (std::size_t s = 0; s <= segments; ++s) bounds[s] = s * n / segments;
  const auto xv = x.values();
  std::vector<double> out(segments * m, 0.0);
  for (std::size_t s = 0; s < segments; ++s) {
    const double inv = 1.0 / static_cast<double>(bounds[s + 1] - bounds[s]);
    for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i)
      for (std::size_t j = 0; j < m; ++j) out[s * m + j] += xv[i * m + j];
    for (std::size_t j = 0; j < m; ++j) out[s * m + j] *= inv;
  }
  return make_result("segment_mean_rows", {segments, m}, std::move(out), {x},
                     [m, bounds = std::move(bounds)](detail::Node& self) {
                       auto& g = gbuf(self, 0);
                       for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
                         const double inv = 1.0 / static_cast<double>(bounds[s + 1] - bounds[s]);
                         for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i)
                           for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[s * m + j] * inv;
                       }
                     });
}

// ---- differentiation ------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Intermediate gradients are not needed after the sweep.
  for (detail::Node* n : order) {
    if (n->backward) n->grad.clear();
  }
}

}  // namespace tridx
