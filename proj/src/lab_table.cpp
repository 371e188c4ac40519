// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/lab_table.hpp"

#include <sstream>

#include "tridx/error.hpp"
#include "tridx/lab_table_data.hpp"

namespace tridx {

namespace {

struct GroupInfo {
  std::string_view key;
  std::string_view heading;
  std::size_t bucket4;
};

constexpr std::array<GroupInfo, kLabGroupCount> kGroups{{
    {"routine_blood", "routine blood indicators", 0},
    {"electrolyte_metabolic", "electrolyte and metabolic indicators", 1},
    {"renal_function", "renal function indicators", 2},
    {"liver_function", "liver function indicators", 2},
    {"acid_base_gas", "acid-base balance and gas exchange", 1},
    {"coagulation", "coagulation function indicators", 3},
    {"other", "other indicators", 3},
}};

}  // namespace

std::string_view lab_group_heading(LabGroup g) { return kGroups[static_cast<std::size_t>(g)].heading; }
std::string_view lab_group_key(LabGroup g) { return kGroups[static_cast<std::size_t>(g)].key; }

LabGroup lab_group_from_key(std::string_view key) {
  for (std::size_t i = 0; i < kGroups.size(); ++i) {
    if (kGroups[i].key == key) return static_cast<LabGroup>(i);
  }
  throw DataError("unknown lab group '" + std::string(key) + "'");
}

std::size_t lab_bucket(LabGroup g, std::size_t buckets) {
  const std::size_t b4 = kGroups[static_cast<std::size_t>(g)].bucket4;
  if (buckets >= 4) return b4;
  return b4 * buckets / 4;
}

std::vector<LabIndicator> parse_lab_table(std::string_view tsv) {
  std::vector<LabIndicator> out;
  std::istringstream in{std::string(tsv)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) cols.push_back(cell);
    if (cols.size() != 6) throw DataError("lab table row needs 6 tab-separated columns: " + line);
    LabIndicator ind;
    ind.index = std::stoul(cols[0]);
    ind.name = cols[1];
    ind.unit = cols[2];
    ind.group = lab_group_from_key(cols[3]);
    ind.low = std::stod(cols[4]);
    ind.high = std::stod(cols[5]);
    if (ind.index != out.size()) throw DataError("lab table rows must be numbered consecutively");
    if (!(ind.high > ind.low)) throw DataError("lab range for " + ind.name + " is empty");
    out.push_back(std::move(ind));
  }
  return out;
}

const std::vector<LabIndicator>& lab_indicators() {
  static const std::vector<LabIndicator> table = [] {
    auto t = parse_lab_table(generated::kLabTableTsv);
    if (t.size() != kLabIndicatorCount) throw DataError("lab table must list exactly 50 indicators");
    return t;
  }();
  return table;
}

std::size_t lab_index(std::string_view name) {
  for (const auto& ind : lab_indicators()) {
    if (ind.name == name) return ind.index;
  }
  throw DataError("unknown lab indicator '" + std::string(name) + "'");
}

}  // namespace tridx
