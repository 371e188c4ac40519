// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// The 50 laboratory indicators, their reference ranges and their seven
// physiological groups. Backed by data/lab_indicators_v1.tsv, which is
// compiled in at configure time.

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace tridx {

inline constexpr std::string_view kLabTableVersion = "v1";
inline constexpr std::size_t kLabIndicatorCount = 50;

enum class LabGroup {
  kRoutineBlood = 0,
  kElectrolyteMetabolic,
  kRenalFunction,
  kLiverFunction,
  kAcidBaseGas,
  kCoagulation,
  kOther,
};
inline constexpr std::size_t kLabGroupCount = 7;

struct LabIndicator {
  std::size_t index = 0;
  std::string name;
  std::string unit;
  LabGroup group = LabGroup::kOther;
  double low = 0.0;
  double high = 0.0;

  double center() const { return 0.5 * (low + high); }
  double half_width() const { return 0.5 * (high - low); }
};

const std::vector<LabIndicator>& lab_indicators();
/// Parses the tab-separated table format; exposed for tests.
std::vector<LabIndicator> parse_lab_table(std::string_view tsv);
std::size_t lab_index(std::string_view name);

/// Report heading, e.g. "routine blood indicators".
std::string_view lab_group_heading(LabGroup g);
std::string_view lab_group_key(LabGroup g);
LabGroup lab_group_from_key(std::string_view key);

/// Encoder bucket of a group when the 7 groups are folded onto `buckets` rows.
/// For 4 buckets: routine | electrolyte+acid-base | renal+liver | coagulation+other.
std::size_t lab_bucket(LabGroup g, std::size_t buckets);

}  // namespace tridx
