// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace tridx {

enum class Modality { kEcg = 0, kCxr = 1, kLab = 2 };
inline constexpr std::array<Modality, 3> kModalities{Modality::kEcg, Modality::kCxr, Modality::kLab};

/// "ecg", "cxr" or "lab".
std::string_view modality_name(Modality m);
Modality modality_from_name(std::string_view name);

/// Leads × samples, row-major.
struct EcgSeries {
  std::size_t leads = 12;
  std::size_t samples = 512;
  std::vector<double> values;
};

/// Channels × height × width in [0, 1].
struct CxrImage {
  std::size_t channels = 1;
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<double> pixels;
};

struct LabPanel {
  std::vector<double> values;  // 50 entries; masked-out entries are ignored
  std::vector<bool> present;
};

/// One patient's raw signals. Physiological-level records carry one modality.
struct ModalityBundle {
  std::optional<EcgSeries> ecg;
  std::optional<CxrImage> cxr;
  std::optional<LabPanel> lab;

  bool has(Modality m) const;
  /// Throws InputError on non-finite values or malformed extents.
  void validate() const;
};

}  // namespace tridx
