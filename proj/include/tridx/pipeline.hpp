// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration, the staged training loops and the evaluation/ablation
// drivers behind the command-line tool.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tridx/checkpoint.hpp"
#include "tridx/dataforge.hpp"
#include "tridx/evalsuite.hpp"
#include "tridx/model.hpp"
#include "tridx/rlvr.hpp"

namespace tridx {

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs_warmup = 3;  // text-only base LM epochs run ahead of PT
  std::size_t epochs_pt = 20;
  std::size_t epochs_sft = 20;
  std::size_t rft_iters = 500;
  std::size_t batch = 8;
  std::size_t rft_batch = 2;  // prompts per RFT iteration
  double lr_warmup = 3e-3;
  double lr_pt = 1e-3;
  double lr_sft = 1e-3;
  double lr_rft = 1e-4;
  RftConfig rft;
  double rft_temperature = 1.0;
  std::size_t rft_max_tokens = 200;
};

struct EvalConfig {
  std::size_t max_tokens = 256;
  Averaging averaging = Averaging::kMicro;
};

struct RunConfig {
  std::filesystem::path corpus_dir = "corpus";
  ForgeConfig forge;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

/// Sectioned key = value text. Unknown sections or keys are a ConfigError.
RunConfig parse_run_config(const std::string& ini_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every field with defaults merged; parse_run_config(dump) == cfg.
std::string dump_run_config(const RunConfig& cfg);

/// Keeps freed tape buffers in the heap instead of returning them to the
/// kernel after every backward pass. No-op outside glibc.
void tune_allocator();

/// Hex digest of the model configuration stored in checkpoints.
std::string model_digest(const ModelConfig& cfg);

/// Append-only JSON-lines log plus an optional human-readable progress line.
class RunLog {
 public:
  RunLog() = default;
  /// Truncates `path`; throws IoError when it cannot be opened.
  explicit RunLog(const std::filesystem::path& path, bool progress = false);
  void record(const std::string& json_line);
  void progress(const std::string& line) const;

 private:
  std::shared_ptr<std::ofstream> out_;
  bool progress_ = false;
};

struct Corpus {
  ForgeConfig manifest;
  std::vector<QARecord> train;
  std::vector<QARecord> test;
};

/// Reads manifest.json, train.jsonl and test.jsonl. A manifest from another
/// format or taxonomy version is a ConfigError.
Corpus load_corpus(const std::filesystem::path& dir);

/// Training loops. Each sets the stage's trainable set itself and returns the
/// mean loss of the final epoch (or the final mean reward for RFT).
double run_warmup(TriModalModel& model, const std::vector<QARecord>& train, const TrainConfig& cfg, RunLog& log);
double run_pt(TriModalModel& model, const std::vector<QARecord>& train, const TrainConfig& cfg, RunLog& log);
double run_sft(TriModalModel& model, const std::vector<QARecord>& train, const TrainConfig& cfg, RunLog& log,
               const FusionAblation& ablation = {});
double run_rft(TriModalModel& policy, const TriModalModel& reference, const std::vector<QARecord>& train,
               const TrainConfig& cfg, RunLog& log);

struct StageArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path config;
  CheckpointHeader header;
};

/// Runs one stage and writes <stage>.ckpt, <stage>.log.jsonl and
/// <stage>.config.ini under `out_dir`. PT starts from a fresh model (with the
/// base-LM warmup); SFT needs a PT parent and RFT an SFT parent, otherwise
/// UsageError.
StageArtifacts train_stage(const RunConfig& cfg, const Corpus& corpus, Stage stage,
                           const std::optional<std::filesystem::path>& parent, const std::filesystem::path& out_dir,
                           bool progress = false);

/// Builds the model and loads `checkpoint`, verifying its digest.
std::unique_ptr<TriModalModel> load_model(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                          CheckpointHeader* header = nullptr);

/// Evaluates an sft or rft checkpoint (UsageError otherwise) on `records`.
EvalReport evaluate_checkpoint(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::vector<QARecord>& records, const FusionAblation& ablation = {});

struct AblationRow {
  std::string name;  // "full", "drop_ecg", ...
  FusionAblation ablation;
  EvalReport report;
};

/// Named single-flag ablations for the selected flags, in a fixed order.
std::vector<std::pair<std::string, FusionAblation>> ablation_variants(const FusionAblation& flags);
/// The full model first, then one row per variant. Throws UsageError when no flag is set.
std::vector<AblationRow> run_ablation(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                      const std::vector<QARecord>& records, const FusionAblation& flags);
std::string ablation_json(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace tridx
