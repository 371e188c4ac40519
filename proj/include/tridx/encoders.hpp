// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Modality-specific encoders and projectors. Each modality becomes an m×d
// block of tokens living in the language model's embedding space.
//
//   ECG  leads×samples -> two strided 1-D convolutions -> mean pool per time segment
//   CXR  image         -> non-overlapping patch embedding -> mean pool per horizontal band
//   LAB  50 indicators -> masked standardisation -> group-bucketed 2-layer perceptron
//
// The projector for every modality is linear -> GELU -> linear.

#pragma once

#include <cstddef>

#include "tridx/bundle.hpp"
#include "tridx/params.hpp"
#include "tridx/random.hpp"
#include "tridx/tensor.hpp"

namespace tridx {

struct EncoderConfig {
  std::size_t ecg_leads = 12;
  std::size_t ecg_samples = 512;
  std::size_t ecg_channels = 16;
  std::size_t ecg_kernel1 = 8;
  std::size_t ecg_stride1 = 4;
  std::size_t ecg_kernel2 = 4;
  std::size_t ecg_stride2 = 4;

  std::size_t cxr_channels = 1;
  std::size_t cxr_height = 64;
  std::size_t cxr_width = 64;
  std::size_t patch = 16;

  std::size_t hidden = 32;  // encoder output width
  std::size_t tokens = 4;   // m, tokens per modality
  std::size_t d = 64;       // LM embedding width

  /// Throws ConfigError when extents cannot be partitioned.
  void validate() const;
};

/// Encoder output tagged with the modality that produced it.
struct HiddenFeatures {
  Modality modality;
  Tensor h;  // m × hidden
};

class ModalityEncoders {
 public:
  ModalityEncoders(const EncoderConfig& cfg, ParamStore& store, Rng& rng);

  HiddenFeatures encode_ecg(const EcgSeries& x) const;
  HiddenFeatures encode_cxr(const CxrImage& x) const;
  HiddenFeatures encode_lab(const LabPanel& x) const;
  HiddenFeatures encode(const ModalityBundle& bundle, Modality m) const;

  /// m×d tokens. Throws ContractError when `h` came from another modality.
  Tensor project(const HiddenFeatures& h, Modality which) const;

  const EncoderConfig& config() const { return cfg_; }

  /// Standardised lab values (x - centre) / half-width, 0 where missing.
  static std::vector<double> standardize_lab(const LabPanel& x);
  /// m×50 matrix whose row b holds the standardised indicators of bucket b.
  std::vector<double> lab_bucket_rows(const LabPanel& x) const;
  /// Patch-major flattening: row p = patch p (row-major over the patch grid).
  std::vector<double> cxr_patches(const CxrImage& x) const;

 private:
  EncoderConfig cfg_;
  Tensor ecg_w1_, ecg_b1_, ecg_w2_, ecg_b2_;
  Tensor cxr_w_, cxr_b_;
  Tensor lab_w1_, lab_b1_, lab_w2_, lab_b2_;
  struct Projector {
    Tensor w1, b1, w2, b2;
  };
  Projector proj_[3];
};

}  // namespace tridx
