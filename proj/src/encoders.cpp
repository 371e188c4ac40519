// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/encoders.hpp"

#include <cmath>
#include <span>
#include <string>

#include "tridx/error.hpp"
#include "tridx/lab_table.hpp"

namespace tridx {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kEcg: return "ecg";
    case Modality::kCxr: return "cxr";
    case Modality::kLab: return "lab";
  }
  return "?";
}

Modality modality_from_name(std::string_view name) {
  for (Modality m : kModalities) {
    if (modality_name(m) == name) return m;
  }
  throw DataError("unknown modality '" + std::string(name) + "'");
}

bool ModalityBundle::has(Modality m) const {
  switch (m) {
    case Modality::kEcg: return ecg.has_value();
    case Modality::kCxr: return cxr.has_value();
    case Modality::kLab: return lab.has_value();
  }
  return false;
}

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

void ModalityBundle::validate() const {
  if (ecg) {
    if (ecg->values.size() != ecg->leads * ecg->samples) throw InputError("ecg extents do not match its data");
    require_finite(ecg->values, "ecg");
  }
  if (cxr) {
    if (cxr->pixels.size() != cxr->channels * cxr->height * cxr->width) throw InputError("cxr extents do not match its data");
    require_finite(cxr->pixels, "cxr");
  }
  if (lab) {
    if (lab->values.size() != kLabIndicatorCount || lab->present.size() != kLabIndicatorCount) {
      throw InputError("lab panel must hold 50 values and a 50-entry mask");
    }
    for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
      if (lab->present[i] && !std::isfinite(lab->values[i])) throw InputError("lab value is non-finite");
    }
  }
}

void EncoderConfig::validate() const {
  if (tokens == 0 || d == 0 || hidden == 0) throw ConfigError("encoder widths must be positive");
  if (patch == 0 || cxr_height % patch != 0 || cxr_width % patch != 0) {
    throw ConfigError("cxr " + std::to_string(cxr_height) + "x" + std::to_string(cxr_width) +
                      " is not divisible by patch " + std::to_string(patch));
  }
  if ((cxr_height / patch) % tokens != 0) {
    throw ConfigError("patch rows must split evenly into " + std::to_string(tokens) + " bands");
  }
  if (ecg_samples < ecg_kernel1) throw ConfigError("ecg shorter than the first kernel");
  const std::size_t l1 = (ecg_samples - ecg_kernel1) / ecg_stride1 + 1;
  if (l1 < ecg_kernel2 || (l1 - ecg_kernel2) / ecg_stride2 + 1 < tokens) {
    throw ConfigError("ecg too short for " + std::to_string(tokens) + " segments");
  }
}

ModalityEncoders::ModalityEncoders(const EncoderConfig& cfg, ParamStore& store, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t h = cfg.hidden;
  const auto he = [](std::size_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); };

  const std::size_t in1 = cfg.ecg_kernel1 * cfg.ecg_leads;
  ecg_w1_ = store.add("enc.ecg.conv1.w", randn({in1, cfg.ecg_channels}, he(in1), rng));
  ecg_b1_ = store.add("enc.ecg.conv1.b", Tensor::zeros({cfg.ecg_channels}, true));
  const std::size_t in2 = cfg.ecg_kernel2 * cfg.ecg_channels;
  ecg_w2_ = store.add("enc.ecg.conv2.w", randn({in2, h}, he(in2), rng));
  ecg_b2_ = store.add("enc.ecg.conv2.b", Tensor::zeros({h}, true));

  const std::size_t pin = cfg.cxr_channels * cfg.patch * cfg.patch;
  cxr_w_ = store.add("enc.cxr.patch.w", randn({pin, h}, he(pin), rng));
  cxr_b_ = store.add("enc.cxr.patch.b", Tensor::zeros({h}, true));

  lab_w1_ = store.add("enc.lab.w1", randn({kLabIndicatorCount, h}, 0.5, rng));
  lab_b1_ = store.add("enc.lab.b1", Tensor::zeros({cfg.tokens, h}, true));
  lab_w2_ = store.add("enc.lab.w2", randn({h, h}, he(h), rng));
  lab_b2_ = store.add("enc.lab.b2", Tensor::zeros({h}, true));

  for (Modality m : kModalities) {
    const std::string p = "proj." + std::string(modality_name(m));
    auto& pr = proj_[static_cast<int>(m)];
    pr.w1 = store.add(p + ".w1", randn({h, cfg.d}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    pr.b1 = store.add(p + ".b1", Tensor::zeros({cfg.d}, true));
    pr.w2 = store.add(p + ".w2", randn({cfg.d, cfg.d}, 1.0 / std::sqrt(static_cast<double>(cfg.d)), rng));
    pr.b2 = store.add(p + ".b2", Tensor::zeros({cfg.d}, true));
  }
}

HiddenFeatures ModalityEncoders::encode_ecg(const EcgSeries& x) const {
  if (x.leads != cfg_.ecg_leads || x.samples != cfg_.ecg_samples || x.values.size() != x.leads * x.samples) {
    throw DimensionError("ecg must be " + std::to_string(cfg_.ecg_leads) + "x" + std::to_string(cfg_.ecg_samples));
  }
  require_finite(x.values, "ecg");
  // time-major copy so that convolution windows are contiguous rows
  std::vector<double> tm(x.values.size());
  for (std::size_t l = 0; l < x.leads; ++l)
    for (std::size_t t = 0; t < x.samples; ++t) tm[t * x.leads + l] = x.values[l * x.samples + t];
  const Tensor signal = Tensor::from({x.samples, x.leads}, std::move(tm));
  const Tensor c1 = relu(linear(frames(signal, cfg_.ecg_kernel1, cfg_.ecg_stride1), ecg_w1_, ecg_b1_));
  const Tensor c2 = relu(linear(frames(c1, cfg_.ecg_kernel2, cfg_.ecg_stride2), ecg_w2_, ecg_b2_));
  return {Modality::kEcg, segment_mean_rows(c2, cfg_.tokens)};
}

std::vector<double> ModalityEncoders::cxr_patches(const CxrImage& x) const {
  const std::size_t p = cfg_.patch;
  const std::size_t gr = x.height / p, gc = x.width / p;
  const std::size_t w = x.channels * p * p;
  std::vector<double> out(gr * gc * w);
  for (std::size_t pr = 0; pr < gr; ++pr)
    for (std::size_t pc = 0; pc < gc; ++pc) {
      double* row = out.data() + (pr * gc + pc) * w;
      for (std::size_t c = 0; c < x.channels; ++c)
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < p; ++j)
            row[(c * p + i) * p + j] = x.pixels[(c * x.height + pr * p + i) * x.width + pc * p + j];
    }
  return out;
}

HiddenFeatures ModalityEncoders::encode_cxr(const CxrImage& x) const {
  if (x.height % cfg_.patch != 0 || x.width % cfg_.patch != 0) {
    throw ConfigError("cxr " + std::to_string(x.height) + "x" + std::to_string(x.width) + " is not divisible by patch " +
                      std::to_string(cfg_.patch));
  }
  if (x.channels != cfg_.cxr_channels || x.height != cfg_.cxr_height || x.width != cfg_.cxr_width ||
      x.pixels.size() != x.channels * x.height * x.width) {
    throw DimensionError("cxr extents do not match the encoder configuration");
  }
  require_finite(x.pixels, "cxr");
  const std::size_t n = (x.height / cfg_.patch) * (x.width / cfg_.patch);
  const Tensor patches = Tensor::from({n, x.channels * cfg_.patch * cfg_.patch}, cxr_patches(x));
  // patch rows are contiguous, so equal row segments are horizontal bands
  return {Modality::kCxr, segment_mean_rows(relu(linear(patches, cxr_w_, cxr_b_)), cfg_.tokens)};
}

std::vector<double> ModalityEncoders::standardize_lab(const LabPanel& x) {
  const auto& table = lab_indicators();
  std::vector<double> z(kLabIndicatorCount, 0.0);
  for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
    if (x.present[i]) z[i] = (x.values[i] - table[i].center()) / table[i].half_width();
  }
  return z;
}

std::vector<double> ModalityEncoders::lab_bucket_rows(const LabPanel& x) const {
  const auto z = standardize_lab(x);
  const auto& table = lab_indicators();
  std::vector<double> rows(cfg_.tokens * kLabIndicatorCount, 0.0);
  for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
    rows[lab_bucket(table[i].group, cfg_.tokens) * kLabIndicatorCount + i] = z[i];
  }
  return rows;
}

HiddenFeatures ModalityEncoders::encode_lab(const LabPanel& x) const {
  if (x.values.size() != kLabIndicatorCount || x.present.size() != kLabIndicatorCount) {
    throw DimensionError("lab panel must hold 50 values with a 50-entry mask");
  }
  bool any = false;
  for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
    if (!x.present[i]) continue;
    any = true;
    if (!std::isfinite(x.values[i])) throw InputError("lab value " + std::to_string(i) + " is non-finite");
  }
  if (!any) throw InputError("lab panel has no present values");
  const Tensor rows = Tensor::from({cfg_.tokens, kLabIndicatorCount}, lab_bucket_rows(x));
  const Tensor hidden = relu(add(matmul(rows, lab_w1_), lab_b1_));
  return {Modality::kLab, relu(linear(hidden, lab_w2_, lab_b2_))};
}

HiddenFeatures ModalityEncoders::encode(const ModalityBundle& bundle, Modality m) const {
  if (!bundle.has(m)) throw DataError("bundle has no " + std::string(modality_name(m)) + " data");
  switch (m) {
    case Modality::kEcg: return encode_ecg(*bundle.ecg);
    case Modality::kCxr: return encode_cxr(*bundle.cxr);
    case Modality::kLab: return encode_lab(*bundle.lab);
  }
  throw ContractError("unreachable modality");
}

Tensor ModalityEncoders::project(const HiddenFeatures& h, Modality which) const {
  if (h.modality != which) {
    throw ContractError("features from the " + std::string(modality_name(h.modality)) + " encoder given to the " +
                        std::string(modality_name(which)) + " projector");
  }
  const auto& p = proj_[static_cast<int>(which)];
  return linear(gelu(linear(h.h, p.w1, p.b1)), p.w2, p.b2);
}

}  // namespace tridx
