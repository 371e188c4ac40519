// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "tridx/tensor.hpp"

namespace tridx {

/// d×d projections. Head h owns columns [h·d/heads, (h+1)·d/heads) of wq, wk, wv
/// and the matching rows of wo.
struct AttentionWeights {
  Tensor wq, wk, wv, wo;
};

/// Scaled dot-product attention per head (scale 1/sqrt(d/heads)), heads
/// concatenated and output-projected. With `causal`, query i sees keys
/// j <= i + (m_k - m_q).
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionWeights& w, bool causal = false);

}  // namespace tridx
