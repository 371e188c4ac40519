// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/attention.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "tridx/error.hpp"

namespace tridx {

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionWeights& w, bool causal) {
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw DimensionError("attention operands " + shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                         shape_str(v.shape()));
  }
  const std::size_t dh = d / heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor qp = matmul(q, w.wq);
  const Tensor kp = matmul(k, w.wk);
  const Tensor vp = matmul(v, w.wv);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? qp : slice_cols(qp, h * dh, dh);
    const Tensor kh = heads == 1 ? kp : slice_cols(kp, h * dh, dh);
    const Tensor vh = heads == 1 ? vp : slice_cols(vp, h * dh, dh);
    const Tensor scores = scale(matmul_nt(qh, kh), s);
    const Tensor attn = causal ? causal_softmax_rows(scores) : softmax(scores, -1);
    outs.push_back(matmul(attn, vh));
  }
  const Tensor joined = heads == 1 ? outs[0] : concat_cols(outs);
  return matmul(joined, w.wo);
}

}  // namespace tridx
