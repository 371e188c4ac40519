// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Clinical-efficacy metrics over extracted disease sets and n-gram metrics
// over generated text.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tridx/dataforge.hpp"
#include "tridx/fusion.hpp"
#include "tridx/model.hpp"
#include "tridx/rlvr.hpp"

namespace tridx {

inline constexpr std::string_view kNlgTokenizerVersion = "v1";

/// The 7 categories followed by "no acute disease".
std::vector<std::string> clinical_universe();

struct PrfRow {
  std::string label;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool zero_division = false;  // some ratio had an empty denominator and was set to 0
};

struct PrfReport {
  PrfRow micro;  // pooled; predictions outside the universe count as FP here only
  PrfRow macro;  // unweighted mean of the per-label rows
  std::vector<PrfRow> per_label;
};

/// Throws DataError on a length mismatch, TaxonomyError when a gold label is
/// outside the universe.
PrfReport multilabel_prf1(const std::vector<DiseaseSet>& preds, const std::vector<DiseaseSet>& golds,
                          const std::vector<std::string>& universe);

struct AucReport {
  double macro = 0.0;
  std::vector<std::pair<std::string, double>> per_label;  // scorable labels only
  std::vector<std::string> skipped;  // labels with a single class in the gold sets
};

/// Per-label AUC of binary presence scores, (TPR + TNR) / 2, macro-averaged.
AucReport multilabel_auc(const std::vector<DiseaseSet>& preds, const std::vector<DiseaseSet>& golds,
                         const std::vector<std::string>& universe);

/// Lowercase; runs of letters/digits form tokens, every other non-space byte is its own token.
std::vector<std::string> nlg_tokenize(std::string_view text);

/// Corpus BLEU with brevity penalty. Zero match counts for n >= 2 are smoothed
/// as (0 + 1) / (total + 1). Throws DataError on an empty corpus, a length
/// mismatch or an empty reference.
double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
            std::size_t max_n = 4);

/// LCS-based F-measure (β = 1).
double rouge_l(std::string_view hypothesis, std::string_view reference);

/// Produces the completion scored for a record.
class Responder {
 public:
  virtual ~Responder() = default;
  virtual std::string respond(const QARecord& record) = 0;
};

/// Replays the reference answer.
class OracleResponder final : public Responder {
 public:
  std::string respond(const QARecord& record) override { return record.answer; }
};

/// Argmax decoding from the model.
class ModelResponder final : public Responder {
 public:
  ModelResponder(const TriModalModel& model, FusionAblation ablation = {}, std::size_t max_tokens = 256);
  std::string respond(const QARecord& record) override;

 private:
  const TriModalModel& model_;
  FusionAblation ablation_;
  std::size_t max_tokens_;
};

struct SampleResult {
  std::string id;
  std::string hypothesis;
  std::string reference;
  std::optional<DiseaseSet> extracted;
  DiseaseSet gold;
  double format = 0.0;
  double jaccard = 0.0;
};

enum class Averaging { kMicro, kMacro };

struct EvalReport {
  std::size_t n_samples = 0;
  Averaging averaging = Averaging::kMicro;
  double precision = 0.0, recall = 0.0, f1 = 0.0, auc = 0.0;
  double bleu = 0.0, rouge_l = 0.0;
  double format_rate = 0.0, mean_jaccard = 0.0;
  PrfReport prf;
  AucReport auc_detail;
  std::vector<std::string> unavailable{"METEOR", "BERTScore"};
  std::vector<SampleResult> samples;

  std::string to_json() const;
  std::string to_table() const;
  /// One line per sample: hypothesis, extracted set and gold set.
  std::string samples_jsonl() const;
};

EvalReport build_report(std::vector<SampleResult> samples, Averaging averaging = Averaging::kMicro);

/// Scores every disease-level record; physiological records are skipped.
/// Throws DataError when there is none.
EvalReport evaluate_run(Responder& responder, const std::vector<QARecord>& records,
                        Averaging averaging = Averaging::kMicro);

}  // namespace tridx
