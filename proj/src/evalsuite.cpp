// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/evalsuite.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>

#include "tridx/error.hpp"
#include "tridx/tokenizer.hpp"

namespace tridx {

using json = nlohmann::ordered_json;

std::vector<std::string> clinical_universe() {
  std::vector<std::string> u;
  for (const auto& c : disease_taxonomy()) u.push_back(c.name);
  u.emplace_back(kNoAcuteDisease);
  return u;
}

namespace {

double ratio(std::size_t num, std::size_t den, bool& zero) {
  if (den == 0) {
    zero = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

void finish_row(PrfRow& r) {
  r.precision = ratio(r.tp, r.tp + r.fp, r.zero_division);
  r.recall = ratio(r.tp, r.tp + r.fn, r.zero_division);
  // 2PR / (P + R) written over the integer counts
  r.f1 = r.tp == 0 ? 0.0 : static_cast<double>(2 * r.tp) / static_cast<double>(2 * r.tp + r.fp + r.fn);
}

void check_inputs(const std::vector<DiseaseSet>& preds, const std::vector<DiseaseSet>& golds,
                  const std::vector<std::string>& universe) {
  if (preds.size() != golds.size()) {
    throw DataError("prediction count " + std::to_string(preds.size()) + " differs from gold count " +
                    std::to_string(golds.size()));
  }
  for (const auto& g : golds)
    for (const auto& label : g) {
      if (std::find(universe.begin(), universe.end(), label) == universe.end()) {
        throw TaxonomyError("gold label '" + label + "' is outside the label universe");
      }
    }
}

}  // namespace

PrfReport multilabel_prf1(const std::vector<DiseaseSet>& preds, const std::vector<DiseaseSet>& golds,
                          const std::vector<std::string>& universe) {
  check_inputs(preds, golds, universe);
  PrfReport rep;
  rep.micro.label = "micro";
  rep.macro.label = "macro";
  for (const auto& label : universe) {
    PrfRow row;
    row.label = label;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i].count(label) > 0, g = golds[i].count(label) > 0;
      row.tp += p && g;
      row.fp += p && !g;
      row.fn += !p && g;
      row.tn += !p && !g;
    }
    finish_row(row);
    rep.micro.tp += row.tp;
    rep.micro.fp += row.fp;
    rep.micro.fn += row.fn;
    rep.micro.tn += row.tn;
    rep.per_label.push_back(row);
  }
  for (const auto& p : preds)
    for (const auto& label : p) {
      if (std::find(universe.begin(), universe.end(), label) == universe.end()) ++rep.micro.fp;
    }
  finish_row(rep.micro);
  if (!rep.per_label.empty()) {
    for (const auto& r : rep.per_label) {
      rep.macro.precision += r.precision;
      rep.macro.recall += r.recall;
      rep.macro.f1 += r.f1;
      rep.macro.zero_division = rep.macro.zero_division || r.zero_division;
    }
    const double n = static_cast<double>(rep.per_label.size());
    rep.macro.precision /= n;
    rep.macro.recall /= n;
    rep.macro.f1 /= n;
    rep.macro.tp = rep.micro.tp;
    rep.macro.fp = rep.micro.fp;
    rep.macro.fn = rep.micro.fn;
  }
  return rep;
}

AucReport multilabel_auc(const std::vector<DiseaseSet>& preds, const std::vector<DiseaseSet>& golds,
                         const std::vector<std::string>& universe) {
  check_inputs(preds, golds, universe);
  AucReport rep;
  double sum = 0.0;
  for (const auto& label : universe) {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i].count(label) > 0, g = golds[i].count(label) > 0;
      (g ? (p ? tp : fn) : (p ? fp : tn)) += 1;
    }
    if (tp + fn == 0 || tn + fp == 0) {
      rep.skipped.push_back(label);
      continue;
    }
    // (TPR + TNR) / 2 as a single rational
    const std::size_t pos = tp + fn, neg = tn + fp;
    const double a = static_cast<double>(tp * neg + tn * pos) / static_cast<double>(2 * pos * neg);
    rep.per_label.emplace_back(label, a);
    sum += a;
  }
  rep.macro = rep.per_label.empty() ? 0.0 : sum / static_cast<double>(rep.per_label.size());
  return rep;
}

std::vector<std::string> nlg_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    if (!std::isspace(c)) out.emplace_back(1, ch);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams count_ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references, std::size_t max_n) {
  if (hypotheses.empty()) throw DataError("bleu needs a nonempty corpus");
  if (hypotheses.size() != references.size()) throw DataError("bleu needs one reference per hypothesis");
  if (max_n == 0) throw ConfigError("bleu max_n must be positive");
  std::vector<std::size_t> matches(max_n, 0), totals(max_n, 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = nlg_tokenize(hypotheses[i]);
    const auto r = nlg_tokenize(references[i]);
    if (r.empty()) throw DataError("bleu reference " + std::to_string(i) + " is empty");
    hyp_len += h.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const Ngrams hc = count_ngrams(h, n), rc = count_ngrams(r, n);
      for (const auto& [g, c] : hc) {
        const auto it = rc.find(g);
        matches[n - 1] += std::min(c, it == rc.end() ? std::size_t{0} : it->second);
        totals[n - 1] += c;
      }
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    const double m = static_cast<double>(matches[n]), t = static_cast<double>(totals[n]);
    log_p += matches[n] == 0 ? std::log(1.0 / (t + 1.0)) : std::log(m / t);
  }
  log_p /= static_cast<double>(max_n);
  const double bp = hyp_len >= ref_len ? 0.0 : 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len);
  return std::exp(bp + log_p);
}

double rouge_l(std::string_view hypothesis, std::string_view reference) {
  const auto h = nlg_tokenize(hypothesis), r = nlg_tokenize(reference);
  if (h.empty() && r.empty()) return 1.0;
  if (h.empty() || r.empty()) return 0.0;
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= h.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = h[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[r.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(h.size()), rc = lcs / static_cast<double>(r.size());
  return 2.0 * p * rc / (p + rc);
}

ModelResponder::ModelResponder(const TriModalModel& model, FusionAblation ablation, std::size_t max_tokens)
    : model_(model), ablation_(ablation), max_tokens_(max_tokens) {}

std::string ModelResponder::respond(const QARecord& record) {
  NoGradGuard ng;
  const auto prompt = Tokenizer::encode(record.question);
  const auto blocks = model_.lm_blocks(model_.project(record.bundle), ablation_);
  const Tensor prefix = splice(model_.lm(), prompt, {}, blocks).x;
  const Completion c = generate(model_.lm(), prefix, {0.0, max_tokens_, 0});
  return Tokenizer::decode(c.ids);
}

EvalReport build_report(std::vector<SampleResult> samples, Averaging averaging) {
  if (samples.empty()) throw DataError("no samples to evaluate");
  EvalReport rep;
  rep.n_samples = samples.size();
  rep.averaging = averaging;
  const auto universe = clinical_universe();
  std::vector<DiseaseSet> preds, golds;
  std::vector<std::string> hyps, refs;
  double rouge = 0.0;
  for (auto& s : samples) {
    s.extracted = extract_answer_set(s.hypothesis);
    s.format = format_reward(s.hypothesis);
    s.jaccard = jaccard_reward(s.extracted, s.gold);
    preds.push_back(s.extracted.value_or(DiseaseSet{}));
    golds.push_back(s.gold);
    hyps.push_back(s.hypothesis);
    refs.push_back(s.reference);
    rouge += rouge_l(s.hypothesis, s.reference);
    rep.format_rate += s.format;
    rep.mean_jaccard += s.jaccard;
  }
  const double n = static_cast<double>(samples.size());
  rep.format_rate /= n;
  rep.mean_jaccard /= n;
  rep.rouge_l = rouge / n;
  rep.bleu = bleu(hyps, refs);
  rep.prf = multilabel_prf1(preds, golds, universe);
  rep.auc_detail = multilabel_auc(preds, golds, universe);
  const PrfRow& head = averaging == Averaging::kMicro ? rep.prf.micro : rep.prf.macro;
  rep.precision = head.precision;
  rep.recall = head.recall;
  rep.f1 = head.f1;
  rep.auc = rep.auc_detail.macro;
  rep.samples = std::move(samples);
  return rep;
}

EvalReport evaluate_run(Responder& responder, const std::vector<QARecord>& records, Averaging averaging) {
  std::vector<SampleResult> samples;
  for (const auto& r : records) {
    if (r.level != QaLevel::kDisease) continue;
    SampleResult s;
    s.id = r.id;
    s.hypothesis = responder.respond(r);
    s.reference = r.answer;
    s.gold = r.gold();
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw DataError("corpus holds no disease-level records");
  return build_report(std::move(samples), averaging);
}

namespace {

json set_json(const DiseaseSet& s) { return json(std::vector<std::string>(s.begin(), s.end())); }

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["n_samples"] = n_samples;
  j["averaging"] = averaging == Averaging::kMicro ? "micro" : "macro";
  j["nlg_tokenizer"] = kNlgTokenizerVersion;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["auc"] = auc;
  j["bleu"] = bleu;
  j["rouge_l"] = rouge_l;
  j["format_rate"] = format_rate;
  j["mean_jaccard"] = mean_jaccard;
  j["micro"] = {{"tp", prf.micro.tp},
                {"fp", prf.micro.fp},
                {"fn", prf.micro.fn},
                {"precision", prf.micro.precision},
                {"recall", prf.micro.recall},
                {"f1", prf.micro.f1},
                {"zero_division", prf.micro.zero_division}};
  json rows = json::array();
  for (const auto& r : prf.per_label) {
    json row{{"label", r.label}, {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn},
             {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"zero_division", r.zero_division}};
    const auto it = std::find_if(auc_detail.per_label.begin(), auc_detail.per_label.end(),
                                 [&](const auto& p) { return p.first == r.label; });
    row["auc"] = it == auc_detail.per_label.end() ? json(nullptr) : json(it->second);
    rows.push_back(std::move(row));
  }
  j["per_disease"] = rows;
  j["auc_skipped"] = auc_detail.skipped;
  j["unavailable"] = unavailable;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "samples %zu  averaging %s\n", n_samples, averaging == Averaging::kMicro ? "micro" : "macro");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %-10s %-10s %-10s %-10s %-10s %-10s %-10s\n", "precision", "recall", "f1", "auc",
                "bleu", "rouge_l", "format", "jaccard");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n", precision, recall,
                f1, auc, bleu, rouge_l, format_rate, mean_jaccard);
  out += buf;
  out += "\n";
  std::snprintf(buf, sizeof buf, "%-24s %5s %5s %5s %5s %9s %9s %9s %9s\n", "disease", "tp", "fp", "fn", "tn",
                "precision", "recall", "f1", "auc");
  out += buf;
  for (const auto& r : prf.per_label) {
    const auto it = std::find_if(auc_detail.per_label.begin(), auc_detail.per_label.end(),
                                 [&](const auto& p) { return p.first == r.label; });
    char auc_s[16];
    if (it == auc_detail.per_label.end()) std::snprintf(auc_s, sizeof auc_s, "%s", "-");
    else std::snprintf(auc_s, sizeof auc_s, "%.4f", it->second);
    std::snprintf(buf, sizeof buf, "%-24s %5zu %5zu %5zu %5zu %9.4f %9.4f %9.4f %9s\n", r.label.c_str(), r.tp, r.fp, r.fn,
                  r.tn, r.precision, r.recall, r.f1, auc_s);
    out += buf;
  }
  out += "\nunavailable: ";
  for (std::size_t i = 0; i < unavailable.size(); ++i) out += (i ? ", " : "") + unavailable[i];
  out += "\n";
  return out;
}

std::string EvalReport::samples_jsonl() const {
  std::string out;
  for (const auto& s : samples) {
    json j;
    j["id"] = s.id;
    j["hypothesis"] = s.hypothesis;
    j["extracted"] = s.extracted ? set_json(*s.extracted) : json(nullptr);
    j["gold"] = set_json(s.gold);
    j["format"] = s.format;
    j["jaccard"] = s.jaccard;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace tridx
