// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force counters for the multilabel metrics.

#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "tridx/evalsuite.hpp"

namespace tridx::testing {

inline DiseaseSet random_set(const std::vector<std::string>& universe, std::mt19937_64& rng) {
  DiseaseSet s;
  for (const auto& l : universe)
    if (rng() % 3 == 0) s.insert(l);
  return s;
}

inline std::size_t lcs_brute(const std::vector<std::string>& a, std::size_t i, const std::vector<std::string>& b,
                             std::size_t j) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + lcs_brute(a, i + 1, b, j + 1);
  return std::max(lcs_brute(a, i + 1, b, j), lcs_brute(a, i, b, j + 1));
}

/// Number of quantities in the micro P/R/F1 and per-label AUC reports that
/// differ from direct counting. Zero means an exact match.
inline std::size_t metric_mismatches(const std::vector<DiseaseSet>& preds, const std::vector<DiseaseSet>& golds,
                                     const std::vector<std::string>& universe) {
  std::size_t bad = 0;
  const auto rep = multilabel_prf1(preds, golds, universe);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::size_t inter = 0;
    for (const auto& l : preds[i]) inter += golds[i].count(l);
    tp += inter;
    fp += preds[i].size() - inter;
    fn += golds[i].size() - inter;
  }
  bad += rep.micro.tp != tp;
  bad += rep.micro.fp != fp;
  bad += rep.micro.fn != fn;
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double f1 = tp ? static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
  bad += rep.micro.precision != p;
  bad += rep.micro.recall != r;
  bad += rep.micro.f1 != f1;

  // rank statistic: wins over (positive, negative) pairs, ties worth half
  const auto auc = multilabel_auc(preds, golds, universe);
  double sum = 0.0;
  std::size_t scored = 0;
  for (const auto& l : universe) {
    std::size_t twice_wins = 0, pairs = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
      if (!golds[i].count(l)) continue;
      for (std::size_t j = 0; j < golds.size(); ++j) {
        if (golds[j].count(l)) continue;
        ++pairs;
        const int si = preds[i].count(l) ? 1 : 0, sj = preds[j].count(l) ? 1 : 0;
        twice_wins += si > sj ? 2 : si == sj ? 1 : 0;
      }
    }
    if (pairs == 0) {
      bad += std::find(auc.skipped.begin(), auc.skipped.end(), l) == auc.skipped.end();
      continue;
    }
    const double a = static_cast<double>(twice_wins) / static_cast<double>(2 * pairs);
    if (scored >= auc.per_label.size()) return bad + 1;
    bad += auc.per_label[scored].first != l;
    bad += auc.per_label[scored].second != a;
    sum += a;
    ++scored;
  }
  bad += auc.per_label.size() != scored;
  bad += auc.macro != (scored ? sum / static_cast<double>(scored) : 0.0);
  return bad;
}

}  // namespace tridx::testing
