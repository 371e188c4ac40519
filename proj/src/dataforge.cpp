// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/dataforge.hpp"

#include <sodium.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "tridx/error.hpp"
#include "tridx/lab_table.hpp"

namespace tridx {

using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kD = kDiseaseCount;

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

const std::vector<DiseaseCategory>& disease_taxonomy() {
  static const std::vector<DiseaseCategory> t{
      {Disease::kCad, "coronary artery disease", {"I2510", "I252", "I259", "I253", "I255"}},
      {Disease::kArf, "acute renal failure", {"N179", "N170", "N178", "N171"}},
      {Disease::kHtn,
       "hypertension",
       {"I10", "I129", "I120", "I130", "I110", "I132", "I119", "I159", "I150", "I158"}},
      {Disease::kAf, "atrial fibrillation", {"I4891", "I4892", "I480", "I482", "I481", "I483", "I484"}},
      {Disease::kPna, "pneumonia", {"J189", "J181", "J188", "J180"}},
      {Disease::kDm,
       "diabetes mellitus",
       {"E119", "E1129", "E11319", "E1140", "E1165", "E118", "E139", "E109", "E138", "E108"}},
      {Disease::kSepsis,
       "sepsis",
       {"A419", "R6520", "R6521", "A403", "A412", "A409", "A414", "A411", "A401", "A408", "A413", "A400"}},
  };
  return t;
}

std::string_view disease_name(Disease d) { return disease_taxonomy()[static_cast<std::size_t>(d)].name; }

Disease disease_from_name(std::string_view name) {
  const std::string n = normalize_label(name);
  for (const auto& c : disease_taxonomy()) {
    if (c.name == n) return c.id;
  }
  throw TaxonomyError("unknown disease '" + std::string(name) + "'");
}

Disease category_of_subtype(std::string_view code) {
  for (const auto& c : disease_taxonomy()) {
    if (std::find(c.subtype_codes.begin(), c.subtype_codes.end(), code) != c.subtype_codes.end()) return c.id;
  }
  throw TaxonomyError("unknown subtype code '" + std::string(code) + "'");
}

namespace {

struct Signature {
  const char* ecg;
  const char* cxr;
  const char* lab;
};

// indexed by Disease
constexpr std::array<Signature, kD> kSignatures{{
    {"st depression", nullptr, "elevated ck and ast"},
    {nullptr, "pulmonary edema", "elevated creatinine and urea nitrogen"},
    {"high qrs voltage", "cardiomegaly", nullptr},
    {"an irregular rhythm without p waves", "cardiomegaly", nullptr},
    {nullptr, "a basal opacity", "elevated white cells and neutrophils"},
    {"reduced heart rate variability", nullptr, "elevated glucose and anion gap"},
    {"tachycardia", nullptr, "elevated lactate and white cells"},
}};

const char* signature_slot(Disease d, Modality m) {
  const auto& s = kSignatures[static_cast<std::size_t>(d)];
  switch (m) {
    case Modality::kEcg: return s.ecg;
    case Modality::kCxr: return s.cxr;
    case Modality::kLab: return s.lab;
  }
  return nullptr;
}

struct LabShift {
  std::string_view indicator;
  double base;
  double per_severity;
};

// z-units of the indicator's half range, scaled by a + b·severity
const std::vector<LabShift>& lab_shifts(Disease d) {
  static const std::array<std::vector<LabShift>, kD> t{{
      {{"Creatine Kinase (CK)", 2.5, 2.0}, {"Asparate Aminotransferase (AST)", 1.5, 1.5}},
      {{"Creatinine", 3.0, 3.0}, {"Urea Nitrogen", 2.5, 2.5}, {"Potassium", 1.2, 1.0}},
      {},
      {},
      {{"White Blood Cells", 2.0, 1.5}, {"Neutrophils", 1.5, 1.0}, {"Absolute Neutrophil Count", 2.0, 1.5}},
      {{"Glucose", 2.5, 2.5}, {"Anion Gap", 1.5, 1.5}},
      {{"Lactate", 3.0, 3.0}, {"White Blood Cells", 1.5, 1.5}, {"Immature Granulocytes", 2.0, 1.5}},
  }};
  return t[static_cast<std::size_t>(d)];
}

}  // namespace

std::vector<Modality> signature_modalities(Disease d) {
  std::vector<Modality> out;
  for (Modality m : kModalities) {
    if (signature_slot(d, m)) out.push_back(m);
  }
  return out;
}

std::string_view signature_phrase(Disease d, Modality m) {
  const char* p = signature_slot(d, m);
  if (!p) {
    throw ContractError(std::string(disease_name(d)) + " has no " + std::string(modality_name(m)) + " signature");
  }
  return p;
}

std::array<double, kDiseaseCount> default_prevalence() {
  // subtype totals per category over 8,706 admissions, scaled by 0.4 for a healthier desk mix
  constexpr std::array<double, kD> counts{3893, 3081, 6456, 3298, 1490, 3063, 3061};
  std::array<double, kD> w{};
  for (std::size_t i = 0; i < kD; ++i) w[i] = std::round(counts[i] / 8706.0 * 0.4 * 100.0) / 100.0;
  return w;
}

void ForgeConfig::validate() const {
  if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be at least 1");
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("prevalence weights must lie in [0, 1]");
  }
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ConfigError("missing_rate must lie in [0, 1)");
  for (double f : {disease_fraction_train, disease_fraction_test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("disease fractions must lie in [0, 1]");
  }
  if (correlation.empty()) return;
  if (correlation.size() != kD * kD) throw ConfigError("correlation must be a 7x7 matrix");
  Eigen::Matrix<double, kD, kD> c;
  for (std::size_t i = 0; i < kD; ++i)
    for (std::size_t j = 0; j < kD; ++j) c(i, j) = correlation[i * kD + j];
  for (std::size_t i = 0; i < kD; ++i) {
    if (std::abs(c(i, i) - 1.0) > 1e-12) throw ConfigError("correlation diagonal must be 1");
    for (std::size_t j = 0; j < kD; ++j) {
      if (std::abs(c(i, j) - c(j, i)) > 1e-12) throw ConfigError("correlation must be symmetric");
    }
  }
  if (c.llt().info() != Eigen::Success) throw ConfigError("correlation must be positive definite");
}

bool EcgFacts::abnormal() const { return rhythm != Rhythm::kSinus || st_depression || high_voltage || reduced_hrv; }
bool CxrFacts::abnormal() const { return cardiomegaly || edema || opacity != Side::kNone; }

std::vector<LabFlag> lab_flags(const LabPanel& panel) {
  const auto& table = lab_indicators();
  std::vector<LabFlag> out(kLabIndicatorCount, LabFlag::kMissing);
  for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
    if (!panel.present[i]) continue;
    const double v = panel.values[i];
    out[i] = v > table[i].high ? LabFlag::kHigh : v < table[i].low ? LabFlag::kLow : LabFlag::kNormal;
  }
  return out;
}

bool Patient::has(Disease d) const { return std::find(diseases.begin(), diseases.end(), d) != diseases.end(); }

DiseaseSet Patient::gold() const {
  DiseaseSet s;
  for (Disease d : diseases) s.insert(std::string(disease_name(d)));
  if (s.empty()) s.insert(std::string(kNoAcuteDisease));
  return s;
}

namespace {

constexpr double kFs = 100.0;
constexpr std::array<double, 12> kLeadGain{1.0, 1.2, 0.5, -0.9, 0.4, 0.8, -0.6, 0.3, 0.8, 1.3, 1.2, 1.0};

double bump(double t, double mu, double sigma) {
  const double u = (t - mu) / sigma;
  return std::exp(-0.5 * u * u);
}

EcgSeries synth_ecg(Patient& p, Rng& rng) {
  const auto sev = [&](Disease d) { return p.severity[static_cast<std::size_t>(d)]; };
  const bool af = p.has(Disease::kAf), dm = p.has(Disease::kDm), cad = p.has(Disease::kCad);
  const bool htn = p.has(Disease::kHtn), sepsis = p.has(Disease::kSepsis);

  EcgSeries e;
  const std::size_t n = e.samples;
  const double duration = static_cast<double>(n) / kFs;

  double hr = rng.uniform(60.0, 90.0);
  if (sepsis) hr = std::max(hr, 105.0 + 30.0 * sev(Disease::kSepsis));
  p.heart_rate = hr;
  const double rr0 = 60.0 / hr;
  const bool low_hrv = dm && !af;
  const double jitter = low_hrv ? 0.003 : 0.02;
  const double resp = low_hrv ? 0.004 : 0.05;
  const double resp_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<double> beats;
  double t = -rng.uniform(0.0, rr0);
  for (int k = 0; t < duration + 1.0; ++k) {
    beats.push_back(t);
    const double rr = af ? rr0 * rng.uniform(0.55, 1.45)
                         : rr0 * (1.0 + resp * std::sin(2.0 * std::numbers::pi * k / 4.5 + resp_phase) +
                                  jitter * rng.normal());
    t += std::max(rr, 0.25);
  }

  const double qrs = (htn ? 1.7 + 0.6 * sev(Disease::kHtn) : 1.0) * rng.uniform(0.9, 1.1);
  const double st = cad ? 0.12 + 0.12 * sev(Disease::kCad) : 0.0;
  const double t_amp = 0.3 * (cad ? 1.0 - 1.2 * sev(Disease::kCad) : 1.0);
  const double p_amp = af ? 0.0 : 0.12;

  std::vector<double> base(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / kFs;
    double v = 0.0;
    for (double r : beats) {
      const double rel = ti - r;
      if (rel < -0.4 || rel > 0.6) continue;
      v += p_amp * bump(rel, -0.16, 0.025);
      v += qrs * (-0.12 * bump(rel, -0.03, 0.01) + bump(rel, 0.0, 0.012) - 0.25 * bump(rel, 0.03, 0.01));
      v -= st * bump(rel, 0.13, 0.05);
      v += t_amp * bump(rel, 0.26, 0.045);
    }
    base[i] = v;
  }

  std::array<double, 3> fib_f{}, fib_phase{}, fib_amp{};
  for (std::size_t k = 0; k < 3; ++k) {
    fib_f[k] = rng.uniform(4.0, 8.0);
    fib_phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    fib_amp[k] = af ? (0.03 + 0.03 * sev(Disease::kAf)) * rng.uniform(0.7, 1.3) : 0.0;
  }

  e.values.resize(e.leads * n);
  for (std::size_t l = 0; l < e.leads; ++l) {
    const double gain = kLeadGain[l] * rng.uniform(0.9, 1.1);
    const double fib_gain = rng.uniform(0.5, 1.0);
    const double wander_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      const double ti = static_cast<double>(i) / kFs;
      double fib = 0.0;
      for (std::size_t k = 0; k < 3; ++k) fib += fib_amp[k] * std::sin(2.0 * std::numbers::pi * fib_f[k] * ti + fib_phase[k]);
      const double wander = 0.04 * std::sin(2.0 * std::numbers::pi * 0.25 * ti + wander_phase);
      e.values[l * n + i] = f32(gain * base[i] + fib_gain * fib + wander + 0.015 * rng.normal());
    }
  }

  p.ecg.rhythm = af ? Rhythm::kAtrialFibrillation : hr > 100.0 ? Rhythm::kSinusTachycardia : Rhythm::kSinus;
  p.ecg.st_depression = cad;
  p.ecg.high_voltage = htn;
  p.ecg.reduced_hrv = low_hrv;
  return e;
}

CxrImage synth_cxr(Patient& p, Rng& rng) {
  const auto sev = [&](Disease d) { return p.severity[static_cast<std::size_t>(d)]; };
  const bool big_heart = p.has(Disease::kHtn) || p.has(Disease::kAf);
  const bool edema = p.has(Disease::kArf), pna = p.has(Disease::kPna);

  const double dx = rng.uniform(-2.0, 2.0), dy = rng.uniform(-2.0, 2.0);
  const double s = rng.uniform(0.95, 1.05);
  const double contrast = rng.uniform(0.9, 1.1);
  double cf = rng.uniform(0.95, 1.05);
  if (big_heart) cf = 1.35 + 0.2 * std::max(sev(Disease::kHtn), sev(Disease::kAf));
  const double edema_amp = edema ? 0.25 + 0.15 * sev(Disease::kArf) : 0.0;
  const bool image_left = rng.bernoulli(0.5);
  const double pna_amp = pna ? 0.35 + 0.2 * sev(Disease::kPna) : 0.0;
  const double pna_x = (image_left ? 20.0 : 44.0) + dx;

  const auto ellipse = [](double x, double y, double cx, double cy, double rx, double ry) {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    return sigmoid((1.0 - (u * u + v * v)) * 12.0);
  };

  CxrImage img;
  img.pixels.resize(img.height * img.width);
  for (std::size_t yi = 0; yi < img.height; ++yi) {
    for (std::size_t xi = 0; xi < img.width; ++xi) {
      const double x = static_cast<double>(xi), y = static_cast<double>(yi);
      const double body = ellipse(x, y, 32 + dx, 34 + dy, 29 * s, 31 * s);
      double v = 0.05 + 0.4 * body;
      const double lung = std::max(ellipse(x, y, 20 + dx, 28 + dy, 9.5 * s, 17 * s),
                                   ellipse(x, y, 44 + dx, 28 + dy, 9.5 * s, 17 * s));
      v -= 0.3 * lung;
      if (std::abs(x - (32 + dx)) < 3.5 && y >= 4 && y <= 60) v = std::max(v, 0.6);
      const double heart = ellipse(x, y, 35 + dx, 43 + dy, 9 * s * cf, 8 * s);
      v = v * (1.0 - heart) + 0.75 * heart;
      const double hx = x - (32 + dx), hy = y - (30 + dy);
      v += edema_amp * lung * std::exp(-(hx * hx + hy * hy) / (2.0 * 12.0 * 12.0));
      const double px = x - pna_x, py = y - (38 + dy);
      v += pna_amp * lung * std::exp(-(px * px + py * py) / (2.0 * 4.5 * 4.5));
      v = contrast * v + 0.02 * rng.normal();
      img.pixels[yi * img.width + xi] = f32(std::clamp(v, 0.0, 1.0));
    }
  }

  p.cxr.cardiomegaly = big_heart;
  p.cxr.edema = edema;
  // the image's left is the patient's right
  p.cxr.opacity = pna ? (image_left ? Side::kRight : Side::kLeft) : Side::kNone;
  return img;
}

LabPanel synth_lab(const Patient& p, double missing_rate, Rng& rng, Rng& mask_rng) {
  const auto& table = lab_indicators();
  std::vector<double> z(kLabIndicatorCount);
  for (double& v : z) v = std::clamp(rng.normal(0.0, 0.35), -0.9, 0.9);
  for (Disease d : p.diseases) {
    const double sv = p.severity[static_cast<std::size_t>(d)];
    for (const auto& sh : lab_shifts(d)) z[lab_index(sh.indicator)] += sh.base + sh.per_severity * sv;
  }
  LabPanel lab;
  lab.values.resize(kLabIndicatorCount);
  lab.present.resize(kLabIndicatorCount);
  bool any = false;
  for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
    double v = table[i].center() + z[i] * table[i].half_width();
    if (table[i].low >= 0.0) v = std::max(v, 0.0);
    lab.values[i] = f32(v);
    lab.present[i] = !mask_rng.bernoulli(missing_rate);
    any = any || lab.present[i];
  }
  if (!any) lab.present[0] = true;
  return lab;
}

Patient realize(std::uint64_t seed, const std::array<bool, kD>& present, double missing_rate) {
  Patient p;
  Rng meta(derive_seed(seed, 2));
  for (std::size_t i = 0; i < kD; ++i) {
    const double sv = meta.uniform(0.6, 1.0);
    const auto& codes = disease_taxonomy()[i].subtype_codes;
    const std::string& code = codes[meta.index(codes.size())];
    if (!present[i]) continue;
    p.diseases.push_back(static_cast<Disease>(i));
    p.severity[i] = sv;
    p.subtypes.push_back(code);
  }
  Rng ecg_rng(derive_seed(seed, 3)), cxr_rng(derive_seed(seed, 4));
  Rng lab_rng(derive_seed(seed, 5)), mask_rng(derive_seed(seed, 6));
  p.bundle.ecg = synth_ecg(p, ecg_rng);
  p.bundle.cxr = synth_cxr(p, cxr_rng);
  p.bundle.lab = synth_lab(p, missing_rate, lab_rng, mask_rng);
  return p;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Patient sample_patient(std::uint64_t seed, const ForgeConfig& cfg) {
  Rng rng(derive_seed(seed, 1));
  Eigen::Matrix<double, kD, 1> g;
  for (std::size_t i = 0; i < kD; ++i) g(i) = rng.normal();
  if (!cfg.correlation.empty()) {
    Eigen::Matrix<double, kD, kD> c;
    for (std::size_t i = 0; i < kD; ++i)
      for (std::size_t j = 0; j < kD; ++j) c(i, j) = cfg.correlation[i * kD + j];
    Eigen::LLT<Eigen::Matrix<double, kD, kD>> llt(c);
    if (llt.info() != Eigen::Success) throw ConfigError("correlation must be positive definite");
    g = llt.matrixL() * g;
  }
  std::array<bool, kD> present{};
  for (std::size_t i = 0; i < kD; ++i) present[i] = normal_cdf(g(i)) < cfg.weights[i];
  return realize(seed, present, cfg.missing_rate);
}

Patient sample_patient_with(std::uint64_t seed, const std::vector<Disease>& diseases, double missing_rate) {
  std::array<bool, kD> present{};
  for (Disease d : diseases) present[static_cast<std::size_t>(d)] = true;
  return realize(seed, present, missing_rate);
}

std::string_view level_name(QaLevel l) {
  switch (l) {
    case QaLevel::kPhysioEcg: return "physio_ecg";
    case QaLevel::kPhysioCxr: return "physio_cxr";
    case QaLevel::kPhysioLab: return "physio_lab";
    case QaLevel::kDisease: return "disease";
  }
  return "?";
}

QaLevel level_from_name(std::string_view s) {
  for (QaLevel l : {QaLevel::kPhysioEcg, QaLevel::kPhysioCxr, QaLevel::kPhysioLab, QaLevel::kDisease}) {
    if (level_name(l) == s) return l;
  }
  throw DataError("unknown record level '" + std::string(s) + "'");
}

QaLevel physio_level(Modality m) {
  switch (m) {
    case Modality::kEcg: return QaLevel::kPhysioEcg;
    case Modality::kCxr: return QaLevel::kPhysioCxr;
    case Modality::kLab: return QaLevel::kPhysioLab;
  }
  throw ContractError("unreachable modality");
}

const std::vector<std::string>& TemplateEngine::question_bank(QaLevel level) {
  static const std::vector<std::string> ecg{
      "What information can be derived from the ECG <ecg>?",
      "Could you interpret this electrocardiogram <ecg> for me?",
      "Please describe the key findings in my ECG <ecg>.",
      "What does this ECG recording <ecg> show?",
      "Can you explain the rhythm and waveforms of the ECG <ecg>?",
  };
  static const std::vector<std::string> cxr{
      "Would you mind explaining the findings on my chest X-ray <cxr>?",
      "What can be seen on this chest radiograph <cxr>?",
      "Please describe the chest X-ray <cxr>.",
      "Could you review my chest X-ray <cxr> and summarize it?",
      "What are the main observations on the CXR <cxr>?",
  };
  static const std::vector<std::string> lab{
      "Could you interpret my lab results <lab>?",
      "What do these laboratory values <lab> indicate?",
      "Please summarize my blood test report <lab>.",
      "Can you go through my lab panel <lab> group by group?",
      "What stands out in these lab results <lab>?",
  };
  static const std::vector<std::string> disease{
      "Can you analyze my ECG <ecg>, CXR <cxr> and lab result <lab> to determine my probable conditions?",
      "Based on my ECG <ecg>, chest X-ray <cxr> and labs <lab>, what diseases might I have?",
      "Please combine the ECG <ecg>, CXR <cxr> and lab panel <lab> into a diagnosis.",
      "What conditions are suggested by my ECG <ecg>, chest X-ray <cxr> and laboratory tests <lab>?",
      "Using the ECG <ecg>, the CXR <cxr> and the lab results <lab>, which diseases are likely?",
  };
  switch (level) {
    case QaLevel::kPhysioEcg: return ecg;
    case QaLevel::kPhysioCxr: return cxr;
    case QaLevel::kPhysioLab: return lab;
    case QaLevel::kDisease: return disease;
  }
  throw ContractError("unreachable level");
}

std::string TemplateEngine::question(QaLevel level, Rng& rng) const {
  const auto& bank = question_bank(level);
  return bank[rng.index(bank.size())];
}

namespace {

std::string ecg_report(const EcgFacts& f) {
  std::string out = "The ECG shows ";
  switch (f.rhythm) {
    case Rhythm::kSinus: out += "sinus rhythm."; break;
    case Rhythm::kSinusTachycardia: out += "sinus tachycardia."; break;
    case Rhythm::kAtrialFibrillation: out += "atrial fibrillation with an irregular rhythm and no p waves."; break;
  }
  std::vector<std::string> findings;
  if (f.st_depression) findings.emplace_back("st segment depression with flat t waves");
  if (f.high_voltage) findings.emplace_back("increased qrs voltage");
  if (f.reduced_hrv) findings.emplace_back("reduced heart rate variability");
  if (!findings.empty()) out += " Findings: " + join(findings, "; ") + ".";
  if (!f.abnormal()) out += " Intervals and waveforms are within normal limits. Impression: normal ecg.";
  else out += " Impression: abnormal ecg.";
  return out;
}

std::string cxr_report(const CxrFacts& f) {
  std::string out = f.cardiomegaly ? "The heart is enlarged." : "The heart size is normal.";
  std::vector<std::string> lungs;
  if (f.edema) lungs.emplace_back("perihilar haziness consistent with pulmonary edema");
  if (f.opacity != Side::kNone) {
    lungs.emplace_back(std::string("a ") + (f.opacity == Side::kLeft ? "left" : "right") + " basal opacity");
  }
  out += lungs.empty() ? " The lungs are clear." : " The lungs show " + join(lungs, " and ") + ".";
  out += f.abnormal() ? " Impression: abnormal chest x-ray." : " Impression: no acute cardiopulmonary process.";
  return out;
}

std::string lab_report(const LabPanel& panel) {
  const auto& table = lab_indicators();
  const auto flags = lab_flags(panel);
  std::vector<std::string> lines;
  for (std::size_t g = 0; g < kLabGroupCount; ++g) {
    const auto group = static_cast<LabGroup>(g);
    std::vector<std::string> items;
    bool measured = false;
    for (std::size_t i = 0; i < kLabIndicatorCount; ++i) {
      if (table[i].group != group || flags[i] == LabFlag::kMissing) continue;
      measured = true;
      if (flags[i] == LabFlag::kHigh) items.push_back(table[i].name + " high");
      if (flags[i] == LabFlag::kLow) items.push_back(table[i].name + " low");
    }
    std::string line(lab_group_heading(group));
    line += ": ";
    line += !measured ? "not measured." : items.empty() ? "within normal limits." : join(items, ", ") + ".";
    lines.push_back(std::move(line));
  }
  return join(lines, "\n");
}

}  // namespace

std::string TemplateEngine::physio_answer(const Patient& p, Modality m) const {
  switch (m) {
    case Modality::kEcg: return ecg_report(p.ecg);
    case Modality::kCxr: return cxr_report(p.cxr);
    case Modality::kLab: return lab_report(*p.bundle.lab);
  }
  throw ContractError("unreachable modality");
}

std::string TemplateEngine::disease_answer(const DiseaseSet& gold) const {
  if (gold.empty()) throw TaxonomyError("gold disease set is empty");
  if (gold.count(std::string(kNoAcuteDisease))) {
    if (gold.size() != 1) throw TaxonomyError("'no acute disease' cannot be combined with a disease");
    return "<think>the ecg, cxr and lab show no disease specific change.</think>\n<answer>no acute disease</answer>";
  }
  std::vector<Disease> ds;
  for (const auto& name : gold) ds.push_back(disease_from_name(name));
  std::sort(ds.begin(), ds.end());
  std::vector<std::string> evidence;
  for (Disease d : ds) {
    for (Modality m : signature_modalities(d)) {
      evidence.push_back(std::string(modality_name(m)) + " shows " + std::string(signature_phrase(d, m)) +
                         ", supporting " + std::string(disease_name(d)) + ".");
    }
  }
  return "<think>" + join(evidence, " ") + "</think>\n<answer>" + join_disease_set(gold) + "</answer>";
}

const TextGenerationClient& default_text_client() {
  static const TemplateEngine engine;
  return engine;
}

QARecord render_physio_qa(const Patient& p, Modality m, std::uint64_t seed, const TextGenerationClient& client) {
  QARecord r;
  r.level = physio_level(m);
  r.seed = seed;
  Rng rng(seed);
  r.question = client.question(r.level, rng);
  r.answer = client.physio_answer(p, m);
  switch (m) {
    case Modality::kEcg: r.bundle.ecg = p.bundle.ecg; break;
    case Modality::kCxr: r.bundle.cxr = p.bundle.cxr; break;
    case Modality::kLab: r.bundle.lab = p.bundle.lab; break;
  }
  return r;
}

QARecord render_disease_qa(const Patient& p, const DiseaseSet& gold, std::uint64_t seed,
                           const TextGenerationClient& client) {
  QARecord r;
  r.level = QaLevel::kDisease;
  r.seed = seed;
  r.answer = client.disease_answer(gold);
  Rng rng(seed);
  r.question = client.question(r.level, rng);
  r.diseases.assign(gold.begin(), gold.end());
  r.subtypes = p.subtypes;
  r.bundle = p.bundle;
  return r;
}

std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

QARecord generate_record(const ForgeConfig& cfg, Split split, std::size_t index) {
  const std::uint64_t record_seed = derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(split) + 1), index);
  const Patient p = sample_patient(derive_seed(record_seed, 1), cfg);
  const double f = split == Split::kTrain ? cfg.disease_fraction_train : cfg.disease_fraction_test;
  const auto before = [&](std::size_t i) { return static_cast<std::size_t>(std::floor(static_cast<double>(i) * f)); };
  const bool disease = before(index + 1) > before(index);
  QARecord r;
  if (disease) {
    r = render_disease_qa(p, p.gold(), derive_seed(record_seed, 2));
  } else {
    // physiological records cycle ecg, cxr, lab
    const std::size_t k = index - before(index);
    r = render_physio_qa(p, kModalities[k % 3], derive_seed(record_seed, 2));
  }
  char id[32];
  std::snprintf(id, sizeof id, "%s-%05zu", std::string(split_name(split)).c_str(), index);
  r.id = id;
  r.seed = record_seed;
  return r;
}

std::vector<QARecord> generate_split(const ForgeConfig& cfg, Split split) {
  cfg.validate();
  const std::size_t n = split == Split::kTrain ? cfg.n_train : cfg.n_test;
  std::vector<QARecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_record(cfg, split, i));
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little, "corpus encoding assumes a little-endian host");

std::string encode_floats(const std::vector<double>& v) {
  std::vector<float> f(v.begin(), v.end());
  const auto* bytes = reinterpret_cast<const unsigned char*>(f.data());
  const std::size_t n = f.size() * sizeof(float);
  std::string out(sodium_base64_ENCODED_LEN(n, sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes, n, sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<double> decode_floats(const std::string& b64, std::size_t count) {
  std::vector<float> f(count);
  std::size_t len = 0;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(f.data()), count * sizeof(float), b64.data(), b64.size(),
                        nullptr, &len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0 ||
      len != count * sizeof(float)) {
    throw DataError("signal payload is not valid base64 of " + std::to_string(count) + " float32 values");
  }
  return {f.begin(), f.end()};
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

}  // namespace

std::string record_to_jsonl(const QARecord& r) {
  json j;
  j["id"] = r.id;
  j["level"] = level_name(r.level);
  j["question"] = r.question;
  j["answer"] = r.answer;
  j["diseases"] = r.diseases;
  j["subtypes"] = r.subtypes;
  if (r.bundle.ecg) {
    const auto& e = *r.bundle.ecg;
    j["ecg"] = {{"shape", {e.leads, e.samples}}, {"data", encode_floats(e.values)}};
  } else {
    j["ecg"] = nullptr;
  }
  if (r.bundle.cxr) {
    const auto& c = *r.bundle.cxr;
    j["cxr"] = {{"shape", {c.channels, c.height, c.width}}, {"data", encode_floats(c.pixels)}};
  } else {
    j["cxr"] = nullptr;
  }
  if (r.bundle.lab) {
    json values = json::array();
    for (std::size_t i = 0; i < r.bundle.lab->values.size(); ++i) {
      if (r.bundle.lab->present[i]) values.push_back(r.bundle.lab->values[i]);
      else values.push_back(nullptr);
    }
    j["lab"] = {{"values", values}};
  } else {
    j["lab"] = nullptr;
  }
  j["seed"] = r.seed;
  return j.dump();
}

QARecord record_from_jsonl(std::string_view line) {
  QARecord r;
  try {
    const json j = json::parse(line);
    r.id = j.at("id").get<std::string>();
    r.level = level_from_name(j.at("level").get<std::string>());
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.diseases = j.at("diseases").get<std::vector<std::string>>();
    if (j.contains("subtypes")) r.subtypes = j.at("subtypes").get<std::vector<std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (const auto& e = j.at("ecg"); !e.is_null()) {
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw DataError("ecg shape must have 2 extents");
      EcgSeries s;
      s.leads = shape[0];
      s.samples = shape[1];
      s.values = decode_floats(e.at("data").get<std::string>(), product(shape));
      r.bundle.ecg = std::move(s);
    }
    if (const auto& c = j.at("cxr"); !c.is_null()) {
      const auto shape = c.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 3) throw DataError("cxr shape must have 3 extents");
      CxrImage img;
      img.channels = shape[0];
      img.height = shape[1];
      img.width = shape[2];
      img.pixels = decode_floats(c.at("data").get<std::string>(), product(shape));
      r.bundle.cxr = std::move(img);
    }
    if (const auto& l = j.at("lab"); !l.is_null()) {
      const auto& values = l.at("values");
      if (!values.is_array() || values.size() != kLabIndicatorCount) throw DataError("lab values must hold 50 entries");
      LabPanel panel;
      for (const auto& v : values) {
        panel.present.push_back(!v.is_null());
        panel.values.push_back(v.is_null() ? 0.0 : v.get<double>());
      }
      r.bundle.lab = std::move(panel);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed corpus record: ") + e.what());
  }
  r.bundle.validate();
  return r;
}

std::string manifest_text(const ForgeConfig& cfg) {
  json j;
  j["format_version"] = kCorpusFormatVersion;
  j["seed"] = cfg.seed;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  json w;
  for (const auto& c : disease_taxonomy()) w[c.name] = cfg.weights[static_cast<std::size_t>(c.id)];
  j["weights"] = w;
  j["taxonomy_version"] = kTaxonomyVersion;
  j["lab_table_version"] = kLabTableVersion;
  j["correlation"] = cfg.correlation.empty() ? json(nullptr) : json(cfg.correlation);
  j["missing_rate"] = cfg.missing_rate;
  j["disease_fraction_train"] = cfg.disease_fraction_train;
  j["disease_fraction_test"] = cfg.disease_fraction_test;
  return j.dump(2) + "\n";
}

ForgeConfig config_from_manifest(std::string_view text) {
  ForgeConfig cfg;
  try {
    const json j = json::parse(text);
    if (j.at("format_version").get<int>() != kCorpusFormatVersion) throw ConfigError("unsupported corpus format version");
    if (j.at("taxonomy_version").get<std::string>() != kTaxonomyVersion) throw ConfigError("corpus taxonomy version does not match " + std::string(kTaxonomyVersion));
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.n_train = j.at("n_train").get<std::size_t>();
    cfg.n_test = j.at("n_test").get<std::size_t>();
    const auto& w = j.at("weights");
    if (w.size() != kDiseaseCount) throw DataError("manifest must weight all 7 categories");
    for (const auto& [name, value] : w.items()) {
      cfg.weights[static_cast<std::size_t>(disease_from_name(name))] = value.get<double>();
    }
    if (j.contains("correlation") && !j["correlation"].is_null()) {
      cfg.correlation = j["correlation"].get<std::vector<double>>();
    }
    if (j.contains("missing_rate")) cfg.missing_rate = j["missing_rate"].get<double>();
    if (j.contains("disease_fraction_train")) cfg.disease_fraction_train = j["disease_fraction_train"].get<double>();
    if (j.contains("disease_fraction_test")) cfg.disease_fraction_test = j["disease_fraction_test"].get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void emit_corpus(const ForgeConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (Split split : {Split::kTrain, Split::kTest}) {
    const auto path = dir / (std::string(split_name(split)) + ".jsonl");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const std::size_t n = split == Split::kTrain ? cfg.n_train : cfg.n_test;
    for (std::size_t i = 0; i < n; ++i) out << record_to_jsonl(generate_record(cfg, split, i)) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
  }
  const auto mpath = dir / "manifest.json";
  std::ofstream m(mpath, std::ios::binary | std::ios::trunc);
  if (!m) throw IoError("cannot write " + mpath.string());
  m << manifest_text(cfg);
  if (!m) throw IoError("write failed for " + mpath.string());
}

std::vector<QARecord> read_corpus(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl, std::ios::binary);
  if (!in) throw IoError("cannot read " + jsonl.string());
  std::vector<QARecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_jsonl(line));
    } catch (const Error& e) {
      throw DataError(jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tridx
