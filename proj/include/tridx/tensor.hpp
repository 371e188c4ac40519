// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors with a dynamic reverse-mode tape.
//
// Every op builds its result eagerly. When gradient mode is on and at least one
// operand tracks gradients, the result keeps references to its operands and a
// closure that pushes the result's gradient back into them; `backward` walks
// that graph once in reverse topological order. Graphs are confined to the
// thread that built them.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tridx {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  /// Leading extent; 1 for 1-D tensors.
  std::size_t rows() const;
  /// Product of trailing extents; the length for 1-D tensors.
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Fresh leaf holding a copy of the values, no history.
  Tensor detach() const;
  const void* identity() const { return node_.get(); }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
/// x·w (+ bias over rows). Pass an undefined Tensor for no bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
/// x * s with s a one-element tensor.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// ---- normalisation and losses ---------------------------------------------

/// Softmax along `axis` (negative counts from the back), max-subtracted.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax_rows(const Tensor& x);
/// Row softmax of an n×m score matrix where entry (i, j) is masked when
/// j > i + (m - n), i.e. queries are the last n of m positions.
Tensor causal_softmax_rows(const Tensor& scores);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Mean of −log softmax(logits)[target] over rows where mask is true.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     const std::vector<bool>& mask);

// ---- indexing and structure -----------------------------------------------

Tensor embedding(const Tensor& table, std::span<const int> ids);
/// out[i] = x[i, idx[i]]
Tensor pick(const Tensor& x, std::span<const int> idx);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);
/// Sliding windows over rows: out row r = rows [r*stride, r*stride+k) flattened.
Tensor frames(const Tensor& x, std::size_t k, std::size_t stride);

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means, 1×cols.
Tensor mean_rows(const Tensor& x);
/// Splits rows into `segments` contiguous near-equal groups and averages each.
Tensor segment_mean_rows(const Tensor& x, std::size_t segments);

// ---- differentiation ------------------------------------------------------

/// Accumulates d(loss)/d(leaf) into every tracked ancestor of `loss`.
void backward(const Tensor& loss);

}  // namespace tridx
