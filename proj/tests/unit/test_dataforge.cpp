// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "tridx/dataforge.hpp"
#include "tridx/error.hpp"
#include "tridx/lab_table.hpp"
#include "tridx/rlvr.hpp"

using namespace tridx;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tridx_dataforge_" + name);
  std::filesystem::remove_all(p);
  return p;
}

bool same_bundle(const ModalityBundle& a, const ModalityBundle& b) {
  if (a.has(Modality::kEcg) != b.has(Modality::kEcg) || a.has(Modality::kCxr) != b.has(Modality::kCxr) ||
      a.has(Modality::kLab) != b.has(Modality::kLab))
    return false;
  if (a.ecg && (a.ecg->values != b.ecg->values || a.ecg->leads != b.ecg->leads)) return false;
  if (a.cxr && a.cxr->pixels != b.cxr->pixels) return false;
  if (a.lab && (a.lab->present != b.lab->present)) return false;
  if (a.lab) {
    for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
      if (a.lab->present[i] && a.lab->values[i] != b.lab->values[i]) return false;
    }
  }
  return true;
}

// Mann-Whitney AUC by direct pair counting.
double pair_auc(const std::vector<double>& score, const std::vector<int>& label) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (!label[i]) continue;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (label[j]) continue;
      pairs += 1.0;
      wins += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

std::vector<double> features(const Patient& p, const std::set<Modality>& keep) {
  std::vector<double> f;
  const auto& e = *p.bundle.ecg;
  for (std::size_t l = 0; l < e.leads; ++l) {
    double mean = 0, sq = 0, diff = 0, mx = -1e9, mn = 1e9;
    for (std::size_t t = 0; t < e.samples; ++t) {
      const double v = keep.count(Modality::kEcg) ? e.values[l * e.samples + t] : 0.0;
      mean += v;
      sq += v * v;
      if (t) diff += std::abs(v - (keep.count(Modality::kEcg) ? e.values[l * e.samples + t - 1] : 0.0));
      mx = std::max(mx, v);
      mn = std::min(mn, v);
    }
    const double n = static_cast<double>(e.samples);
    f.insert(f.end(), {mean / n, std::sqrt(std::max(0.0, sq / n - mean * mean / n / n)), diff / n, mx, mn});
  }
  const auto& c = *p.bundle.cxr;
  for (std::size_t by = 0; by < 8; ++by)
    for (std::size_t bx = 0; bx < 8; ++bx) {
      double s = 0;
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) s += c.pixels[(by * 8 + y) * c.width + bx * 8 + x];
      f.push_back(keep.count(Modality::kCxr) ? s / 64.0 : 0.0);
    }
  const auto z = [&] {
    std::vector<double> v(kLabIndicatorCount, 0.0);
    const auto& table = lab_indicators();
    for (std::size_t i = 0; i < kLabIndicatorCount; ++i)
      if (p.bundle.lab->present[i]) v[i] = (p.bundle.lab->values[i] - table[i].center()) / table[i].half_width();
    return v;
  }();
  for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
    f.push_back(keep.count(Modality::kLab) ? z[i] : 0.0);
    f.push_back(keep.count(Modality::kLab) && p.bundle.lab->present[i] ? 1.0 : 0.0);
  }
  return f;
}

// L2-regularised logistic regression by full-batch gradient descent; returns held-out AUC.
double probe_auc(const std::vector<std::vector<double>>& xtr, const std::vector<int>& ytr,
                 const std::vector<std::vector<double>>& xte, const std::vector<int>& yte) {
  const std::size_t d = xtr[0].size(), n = xtr.size();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& x : xtr)
    for (std::size_t k = 0; k < d; ++k) mu[k] += x[k] / n;
  for (const auto& x : xtr)
    for (std::size_t k = 0; k < d; ++k) sd[k] += (x[k] - mu[k]) * (x[k] - mu[k]) / n;
  for (auto& s : sd) s = s > 1e-12 ? std::sqrt(s) : 0.0;
  const auto norm = [&](const std::vector<double>& x) {
    std::vector<double> v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = sd[k] > 0 ? (x[k] - mu[k]) / sd[k] : 0.0;
    return v;
  };
  std::vector<std::vector<double>> tr, te;
  for (const auto& x : xtr) tr.push_back(norm(x));
  for (const auto& x : xte) te.push_back(norm(x));
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < 300; ++it) {
    std::vector<double> g(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b;
      for (std::size_t k = 0; k < d; ++k) s += w[k] * tr[i][k];
      const double r = 1.0 / (1.0 + std::exp(-s)) - ytr[i];
      for (std::size_t k = 0; k < d; ++k) g[k] += r * tr[i][k] / n;
      gb += r / n;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= 0.5 * (g[k] + 1e-2 * w[k]);
    b -= 0.5 * gb;
  }
  std::vector<double> score;
  for (const auto& x : te) {
    double s = b;
    for (std::size_t k = 0; k < d; ++k) s += w[k] * x[k];
    score.push_back(s);
  }
  return pair_auc(score, yte);
}

}  // namespace

TEST_CASE("taxonomy: seven categories, unique names, subtypes map to one category") {
  const auto& t = disease_taxonomy();
  REQUIRE(t.size() == 7);
  std::set<std::string> names;
  std::map<std::string, int> owners;
  for (const auto& c : t) {
    names.insert(normalize_label(c.name));
    CHECK(disease_from_name(c.name) == c.id);
    CHECK(signature_modalities(c.id).size() >= 2);
    for (const auto& code : c.subtype_codes) {
      ++owners[code];
      CHECK(category_of_subtype(code) == c.id);
    }
  }
  CHECK(names.size() == 7);
  for (const auto& [code, n] : owners) CHECK_MESSAGE(n == 1, code);
  CHECK(disease_from_name("  Atrial   Fibrillation ") == Disease::kAf);
  CHECK_THROWS_AS(disease_from_name("gout"), TaxonomyError);
  CHECK_THROWS_AS(category_of_subtype("Z999"), TaxonomyError);
  CHECK_THROWS_AS(signature_phrase(Disease::kHtn, Modality::kLab), ContractError);
}

TEST_CASE("config validation") {
  ForgeConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_test = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ForgeConfig{};
  cfg.weights[2] = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ForgeConfig{};
  cfg.correlation.assign(49, 0.0);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // zero diagonal
  for (int i = 0; i < 7; ++i) cfg.correlation[i * 8] = 1.0;
  CHECK_NOTHROW(cfg.validate());
  cfg.correlation[1] = cfg.correlation[7] = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // not positive definite
}

TEST_CASE("sample_patient: determinism and float32-representable values") {
  ForgeConfig cfg;
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const Patient a = sample_patient(seed, cfg), b = sample_patient(seed, cfg);
    CHECK(a.diseases == b.diseases);
    CHECK(same_bundle(a.bundle, b.bundle));
    CHECK_NOTHROW(a.bundle.validate());
    for (double v : a.bundle.ecg->values) REQUIRE(static_cast<double>(static_cast<float>(v)) == v);
    for (double v : a.bundle.cxr->pixels) REQUIRE((v >= 0.0 && v <= 1.0));
  }
  CHECK_FALSE(same_bundle(sample_patient(1, cfg).bundle, sample_patient(2, cfg).bundle));
}

TEST_CASE("sample_patient: healthy labs in range, disease shifts leave it") {
  const auto& table = lab_indicators();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Patient h = sample_patient_with(seed, {}, 0.2);
    CHECK(h.gold() == DiseaseSet{"no acute disease"});
    CHECK_FALSE(h.ecg.abnormal());
    CHECK_FALSE(h.cxr.abnormal());
    for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
      if (!h.bundle.lab->present[i]) continue;
      CHECK(h.bundle.lab->values[i] >= table[i].low);
      CHECK(h.bundle.lab->values[i] <= table[i].high);
    }
    const Patient dm = sample_patient_with(seed, {Disease::kDm}, 0.0);
    CHECK(dm.bundle.lab->values[lab_index("Glucose")] > table[lab_index("Glucose")].high);
    const Patient sick = sample_patient_with(seed, {Disease::kCad, Disease::kArf, Disease::kSepsis, Disease::kDm}, 0.0);
    for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
      if (table[i].low >= 0.0) CHECK(sick.bundle.lab->values[i] >= 0.0);
    }
    CHECK(sick.heart_rate > 100.0);
  }
}

TEST_CASE("prevalence within 5 points at n = 2000") {
  ForgeConfig cfg;
  std::array<int, kDiseaseCount> hits{};
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    const Patient p = sample_patient(derive_seed(7, i), cfg);
    for (Disease d : p.diseases) ++hits[static_cast<std::size_t>(d)];
  }
  for (std::size_t k = 0; k < kDiseaseCount; ++k) {
    CHECK(std::abs(hits[k] / static_cast<double>(n) - cfg.weights[k]) <= 0.05);
  }
}

TEST_CASE("correlated sampling raises co-occurrence") {
  ForgeConfig cfg;
  cfg.weights.fill(0.3);
  ForgeConfig corr = cfg;
  corr.correlation.assign(49, 0.0);
  for (int i = 0; i < 7; ++i) corr.correlation[i * 8] = 1.0;
  corr.correlation[0 * 7 + 2] = corr.correlation[2 * 7 + 0] = 0.8;  // CAD with HTN
  int both_ind = 0, both_corr = 0;
  for (int i = 0; i < 1000; ++i) {
    const Patient a = sample_patient(i, cfg), b = sample_patient(i, corr);
    both_ind += a.has(Disease::kCad) && a.has(Disease::kHtn);
    both_corr += b.has(Disease::kCad) && b.has(Disease::kHtn);
  }
  CHECK(both_corr > both_ind + 80);
}

TEST_CASE("render_physio_qa: lab headings, healthy ecg, template sampling") {
  const Patient h = sample_patient_with(3, {}, 0.2);
  const QARecord ecg = render_physio_qa(h, Modality::kEcg, 11);
  CHECK(ecg.level == QaLevel::kPhysioEcg);
  CHECK(ecg.answer.find("sinus rhythm") != std::string::npos);
  CHECK(ecg.answer.find("abnormal") == std::string::npos);
  CHECK(ecg.bundle.has(Modality::kEcg));
  CHECK_FALSE(ecg.bundle.has(Modality::kCxr));
  CHECK_FALSE(ecg.bundle.has(Modality::kLab));

  const Patient sick = sample_patient_with(3, {Disease::kCad, Disease::kPna, Disease::kDm}, 0.0);
  const QARecord lab = render_physio_qa(sick, Modality::kLab, 5);
  std::size_t pos = 0;
  for (std::size_t g = 0; g < kLabGroupCount; ++g) {
    const auto heading = std::string(lab_group_heading(static_cast<LabGroup>(g)));
    const auto at = lab.answer.find(heading, pos);
    REQUIRE_MESSAGE(at != std::string::npos, heading);
    pos = at + heading.size();
  }
  CHECK(lab.answer.find("Glucose high") != std::string::npos);
  CHECK(lab.answer.find("Creatine Kinase (CK) high") != std::string::npos);
  CHECK(render_physio_qa(sick, Modality::kEcg, 1).answer.find("st segment depression") != std::string::npos);
  const auto cxr = render_physio_qa(sick, Modality::kCxr, 1).answer;
  CHECK(cxr.find("basal opacity") != std::string::npos);
  CHECK(cxr.find("heart size is normal") != std::string::npos);

  std::set<std::string> questions;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const QARecord r = render_physio_qa(sick, Modality::kLab, s);
    CHECK(r.answer == lab.answer);
    questions.insert(r.question);
  }
  CHECK(questions.size() >= 2);
  for (QaLevel l : {QaLevel::kPhysioEcg, QaLevel::kPhysioCxr, QaLevel::kPhysioLab, QaLevel::kDisease}) {
    CHECK(TemplateEngine::question_bank(l).size() >= 5);
  }
}

TEST_CASE("render_disease_qa: chain of evidence and exact answer block") {
  const Patient p = sample_patient_with(5, {Disease::kHtn, Disease::kPna}, 0.2);
  const QARecord r = render_disease_qa(p, p.gold(), 9);
  CHECK(r.answer.find("<answer>hypertension; pneumonia</answer>") != std::string::npos);
  CHECK(r.answer.find("ecg shows high qrs voltage, supporting hypertension.") != std::string::npos);
  CHECK(r.answer.find("cxr shows cardiomegaly, supporting hypertension.") != std::string::npos);
  CHECK(r.answer.find("cxr shows a basal opacity, supporting pneumonia.") != std::string::npos);
  CHECK(r.answer.find("lab shows elevated white cells and neutrophils, supporting pneumonia.") != std::string::npos);
  CHECK(format_reward(r.answer) == 1.0);
  CHECK(extract_answer_set(r.answer) == p.gold());
  for (Modality m : kModalities) CHECK(r.bundle.has(m));
  CHECK(r.subtypes.size() == 2);

  CHECK_THROWS_AS(render_disease_qa(p, DiseaseSet{"gout"}, 1), TaxonomyError);
  CHECK_THROWS_AS(render_disease_qa(p, DiseaseSet{"no acute disease", "sepsis"}, 1), TaxonomyError);
  const Patient h = sample_patient_with(5, {}, 0.2);
  CHECK(extract_answer_set(render_disease_qa(h, h.gold(), 1).answer) == DiseaseSet{"no acute disease"});
}

TEST_CASE("generated records: label and grammar consistency") {
  ForgeConfig cfg;
  cfg.n_train = 120;
  cfg.n_test = 30;
  cfg.seed = 4;
  int disease = 0, physio[3] = {0, 0, 0};
  for (Split s : {Split::kTrain, Split::kTest}) {
    for (const QARecord& r : generate_split(cfg, s)) {
      if (r.level == QaLevel::kDisease) {
        ++disease;
        CHECK(format_reward(r.answer) == 1.0);
        CHECK(extract_answer_set(r.answer) == r.gold());
        CHECK(r.question.find("<ecg>") != std::string::npos);
      } else {
        ++physio[static_cast<int>(r.level)];
        CHECK(r.diseases.empty());
        int count = 0;
        for (Modality m : kModalities) count += r.bundle.has(m);
        CHECK(count == 1);
      }
      if (s == Split::kTest) CHECK(r.level == QaLevel::kDisease);
    }
  }
  CHECK(disease == 60 + 30);
  CHECK(physio[0] == 20);
  CHECK(physio[1] == 20);
  CHECK(physio[2] == 20);
}

TEST_CASE("jsonl round trip preserves every field") {
  ForgeConfig cfg;
  cfg.seed = 12;
  for (std::size_t i = 0; i < 6; ++i) {
    const QARecord r = generate_record(cfg, Split::kTrain, i);
    const QARecord back = record_from_jsonl(record_to_jsonl(r));
    CHECK(back.id == r.id);
    CHECK(back.level == r.level);
    CHECK(back.question == r.question);
    CHECK(back.answer == r.answer);
    CHECK(back.diseases == r.diseases);
    CHECK(back.subtypes == r.subtypes);
    CHECK(back.seed == r.seed);
    CHECK(same_bundle(back.bundle, r.bundle));
    CHECK(record_to_jsonl(back) == record_to_jsonl(r));
  }
  CHECK_THROWS_AS(record_from_jsonl("{not json"), DataError);
  CHECK_THROWS_AS(record_from_jsonl(R"({"id":"x","level":"physio_ecg","question":"","answer":"","diseases":[],"seed":1,)"
                                    R"("ecg":{"shape":[12,512],"data":"AAAA"},"cxr":null,"lab":null})"),
                  DataError);
}

TEST_CASE("emit_corpus: counts, disjoint ids, manifest regeneration is byte-identical") {
  ForgeConfig cfg;
  cfg.n_train = 10;
  cfg.n_test = 2;
  cfg.seed = 31;
  const auto a = scratch("a"), b = scratch("b");
  emit_corpus(cfg, a);
  const auto train = read_corpus(a / "train.jsonl");
  const auto test = read_corpus(a / "test.jsonl");
  CHECK(train.size() == 10);
  CHECK(test.size() == 2);
  std::set<std::string> ids;
  for (const auto& r : train) ids.insert(r.id);
  for (const auto& r : test) ids.insert(r.id);
  CHECK(ids.size() == 12);

  const ForgeConfig again = config_from_manifest(slurp(a / "manifest.json"));
  CHECK(again.seed == 31);
  CHECK(again.weights == cfg.weights);
  emit_corpus(again, b);
  for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json"}) CHECK(slurp(a / f) == slurp(b / f));

  CHECK_THROWS_AS(read_corpus(a / "missing.jsonl"), IoError);
  std::ofstream(a / "blocker") << "x";
  CHECK_THROWS_AS(emit_corpus(cfg, a / "blocker" / "sub"), IoError);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST_CASE("causal grounding: a disease is invisible once its signature modalities are removed") {
  ForgeConfig cfg;
  cfg.weights.fill(0.3);
  std::vector<Patient> tr, te;
  for (int i = 0; i < 900; ++i) tr.push_back(sample_patient(derive_seed(101, i), cfg));
  for (int i = 0; i < 500; ++i) te.push_back(sample_patient(derive_seed(202, i), cfg));
  for (const auto& c : disease_taxonomy()) {
    std::set<Modality> rest(kModalities.begin(), kModalities.end());
    for (Modality m : signature_modalities(c.id)) rest.erase(m);
    const std::set<Modality> all(kModalities.begin(), kModalities.end());
    std::vector<std::vector<double>> xtr_rest, xte_rest, xtr_all, xte_all;
    std::vector<int> ytr, yte;
    for (const auto& p : tr) {
      xtr_rest.push_back(features(p, rest));
      xtr_all.push_back(features(p, all));
      ytr.push_back(p.has(c.id));
    }
    for (const auto& p : te) {
      xte_rest.push_back(features(p, rest));
      xte_all.push_back(features(p, all));
      yte.push_back(p.has(c.id));
    }
    const double hidden = probe_auc(xtr_rest, ytr, xte_rest, yte);
    const double visible = probe_auc(xtr_all, ytr, xte_all, yte);
    MESSAGE(c.name << ": auc without signature " << hidden << ", with " << visible);
    CHECK(hidden <= 0.6);
    CHECK(visible >= 0.8);
  }
}
