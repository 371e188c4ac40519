// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic tri-modal QA corpus. Every patient draws a latent disease set;
// each disease adds a bounded signature to at least two modalities, and the
// text of every record is rendered from the same latent facts.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tridx/bundle.hpp"
#include "tridx/random.hpp"
#include "tridx/rlvr.hpp"

namespace tridx {

inline constexpr std::string_view kTaxonomyVersion = "v1";
inline constexpr std::string_view kNoAcuteDisease = "no acute disease";
inline constexpr std::size_t kDiseaseCount = 7;
inline constexpr int kCorpusFormatVersion = 1;

enum class Disease { kCad = 0, kArf, kHtn, kAf, kPna, kDm, kSepsis };

struct DiseaseCategory {
  Disease id;
  std::string name;  // canonical, already normalised
  std::vector<std::string> subtype_codes;
};

const std::vector<DiseaseCategory>& disease_taxonomy();
/// Throws TaxonomyError for anything but the 7 canonical names.
Disease disease_from_name(std::string_view name);
std::string_view disease_name(Disease d);
/// Category owning an ICD-10 code; throws TaxonomyError when unknown.
Disease category_of_subtype(std::string_view code);

/// Modalities a disease perturbs, in ecg/cxr/lab order.
std::vector<Modality> signature_modalities(Disease d);
/// Short phrase naming what a disease does to a modality ("st depression").
/// Throws ContractError when the disease leaves that modality untouched.
std::string_view signature_phrase(Disease d, Modality m);

/// Category prevalence used when none is configured.
std::array<double, kDiseaseCount> default_prevalence();

struct ForgeConfig {
  std::size_t n_train = 2000;
  std::size_t n_test = 200;
  std::uint64_t seed = 0;
  std::array<double, kDiseaseCount> weights = default_prevalence();
  /// Row-major 7×7 latent correlation of the disease indicators; empty = independent.
  std::vector<double> correlation;
  double missing_rate = 0.2;
  double disease_fraction_train = 0.5;
  double disease_fraction_test = 1.0;

  /// Throws ConfigError for out-of-range values or a non-PD correlation.
  void validate() const;
};

enum class Rhythm { kSinus, kSinusTachycardia, kAtrialFibrillation };

struct EcgFacts {
  Rhythm rhythm = Rhythm::kSinus;
  bool st_depression = false;
  bool high_voltage = false;
  bool reduced_hrv = false;
  bool abnormal() const;
};

enum class Side { kNone, kLeft, kRight };

struct CxrFacts {
  bool cardiomegaly = false;
  bool edema = false;
  Side opacity = Side::kNone;
  bool abnormal() const;
};

enum class LabFlag { kMissing, kLow, kNormal, kHigh };

/// Flags by comparing present values against the reference ranges.
std::vector<LabFlag> lab_flags(const LabPanel& panel);

struct Patient {
  std::vector<Disease> diseases;  // ascending
  std::array<double, kDiseaseCount> severity{};  // 0 when absent
  std::vector<std::string> subtypes;  // one code per disease, metadata only
  double heart_rate = 0.0;
  EcgFacts ecg;
  CxrFacts cxr;
  ModalityBundle bundle;  // all three modalities, float32-representable values

  bool has(Disease d) const;
  DiseaseSet gold() const;  // {no acute disease} when healthy
};

/// Deterministic in `seed`; diseases drawn from the configured prevalence.
Patient sample_patient(std::uint64_t seed, const ForgeConfig& cfg);
/// Same generator with the disease set fixed.
Patient sample_patient_with(std::uint64_t seed, const std::vector<Disease>& diseases, double missing_rate = 0.2);

enum class QaLevel { kPhysioEcg, kPhysioCxr, kPhysioLab, kDisease };
std::string_view level_name(QaLevel l);
QaLevel level_from_name(std::string_view s);
QaLevel physio_level(Modality m);

struct QARecord {
  std::string id;
  QaLevel level = QaLevel::kDisease;
  std::string question;
  std::string answer;
  std::vector<std::string> diseases;  // gold names, disease level only
  std::vector<std::string> subtypes;
  ModalityBundle bundle;
  std::uint64_t seed = 0;

  DiseaseSet gold() const { return make_disease_set(diseases); }
};

/// Authoring backend for question and answer text.
class TextGenerationClient {
 public:
  virtual ~TextGenerationClient() = default;
  virtual std::string question(QaLevel level, Rng& rng) const = 0;
  virtual std::string physio_answer(const Patient& p, Modality m) const = 0;
  /// Chain-of-evidence answer for `gold`; throws TaxonomyError on unknown names.
  virtual std::string disease_answer(const DiseaseSet& gold) const = 0;
};

class TemplateEngine final : public TextGenerationClient {
 public:
  std::string question(QaLevel level, Rng& rng) const override;
  std::string physio_answer(const Patient& p, Modality m) const override;
  std::string disease_answer(const DiseaseSet& gold) const override;

  static const std::vector<std::string>& question_bank(QaLevel level);
};

const TextGenerationClient& default_text_client();

QARecord render_physio_qa(const Patient& p, Modality m, std::uint64_t seed,
                          const TextGenerationClient& client = default_text_client());
QARecord render_disease_qa(const Patient& p, const DiseaseSet& gold, std::uint64_t seed,
                           const TextGenerationClient& client = default_text_client());

enum class Split { kTrain = 0, kTest = 1 };
std::string_view split_name(Split s);

/// Record `index` of a split, independent of every other record.
QARecord generate_record(const ForgeConfig& cfg, Split split, std::size_t index);
std::vector<QARecord> generate_split(const ForgeConfig& cfg, Split split);

std::string record_to_jsonl(const QARecord& r);
/// Throws DataError on malformed lines.
QARecord record_from_jsonl(std::string_view line);

std::string manifest_text(const ForgeConfig& cfg);
ForgeConfig config_from_manifest(std::string_view text);

/// Writes train.jsonl, test.jsonl and manifest.json under `dir`.
void emit_corpus(const ForgeConfig& cfg, const std::filesystem::path& dir);
std::vector<QARecord> read_corpus(const std::filesystem::path& jsonl);

}  // namespace tridx
