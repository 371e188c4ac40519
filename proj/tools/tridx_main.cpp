// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// tridx forge | train | eval | ablate
//
// Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tridx/error.hpp"
#include "tridx/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tridx;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

void require_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

struct Options {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string stage;
  std::string corpus;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
  bool samples = false;
  bool progress = true;
  FusionAblation ablation;
};

RunConfig load(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (!o.corpus.empty()) cfg.corpus_dir = o.corpus;
  cfg.validate();
  return cfg;
}

int cmd_forge(Options& o) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.forge.seed = *o.seed;
  const fs::path out = o.out.empty() ? cfg.corpus_dir : fs::path(o.out);
  if (!out.parent_path().empty() && !fs::is_directory(out.parent_path())) {
    throw IoError("parent of output directory " + out.string() + " does not exist; create it first");
  }
  emit_corpus(cfg.forge, out);
  write_file(out / "forge.config.ini", dump_run_config(cfg));
  std::cout << "wrote " << cfg.forge.n_train << " train and " << cfg.forge.n_test << " test records to " << out.string()
            << "\n";
  return 0;
}

int cmd_train(Options& o) {
  RunConfig cfg = load(o);
  if (o.seed) cfg.train.seed = cfg.model.seed = *o.seed;
  const Stage stage = stage_from_name(o.stage);
  if (o.out.empty()) throw UsageError("train needs --out");
  const Corpus corpus = load_corpus(cfg.corpus_dir);
  std::optional<fs::path> parent;
  if (!o.checkpoint.empty()) parent = fs::path(o.checkpoint);
  const auto art = train_stage(cfg, corpus, stage, parent, o.out, o.progress);
  std::cout << "wrote " << art.checkpoint.string() << "\n";
  return 0;
}

void write_report(const fs::path& dir, const std::string& stem, const EvalReport& rep, bool samples) {
  write_file(dir / (stem + ".json"), rep.to_json());
  write_file(dir / (stem + ".txt"), rep.to_table());
  if (samples) write_file(dir / (stem + ".samples.jsonl"), rep.samples_jsonl());
}

int cmd_eval(Options& o) {
  const RunConfig cfg = load(o);
  if (o.out.empty()) throw UsageError("eval needs --out");
  const Corpus corpus = load_corpus(cfg.corpus_dir);
  require_dir(o.out);
  EvalReport rep;
  if (o.oracle) {
    OracleResponder oracle;
    rep = evaluate_run(oracle, corpus.test, cfg.eval.averaging);
  } else {
    if (o.checkpoint.empty()) throw UsageError("eval needs --checkpoint (or --oracle)");
    rep = evaluate_checkpoint(cfg, o.checkpoint, corpus.test);
  }
  write_report(o.out, "eval", rep, o.samples);
  write_file(fs::path(o.out) / "eval.config.ini", dump_run_config(cfg));
  std::cout << rep.to_table();
  return 0;
}

int cmd_ablate(Options& o) {
  const RunConfig cfg = load(o);
  if (!o.ablation.any()) throw UsageError("ablate needs at least one of --drop-ecg --drop-cxr --drop-lab --disable-cmha --disable-cao");
  if (o.checkpoint.empty()) throw UsageError("ablate needs --checkpoint");
  if (o.out.empty()) throw UsageError("ablate needs --out");
  const Corpus corpus = load_corpus(cfg.corpus_dir);
  require_dir(o.out);
  const auto rows = run_ablation(cfg, o.checkpoint, corpus.test, o.ablation);
  write_file(fs::path(o.out) / "ablation.json", ablation_json(rows));
  write_file(fs::path(o.out) / "ablation.txt", ablation_table(rows));
  write_file(fs::path(o.out) / "ablation.config.ini", dump_run_config(cfg));
  std::cout << ablation_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"tri-modal diagnosis pipeline: corpus generation, staged training, evaluation"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration (INI)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "seed override");
    sub->add_option("--corpus", o.corpus, "corpus directory override");
  };

  auto* forge = app.add_subcommand("forge", "generate the synthetic QA corpus");
  common(forge);

  auto* train = app.add_subcommand("train", "run one training stage");
  common(train);
  train->add_option("--stage", o.stage, "pt, sft or rft")->required()->check(CLI::IsMember({"pt", "sft", "rft"}));
  train->add_option("--checkpoint", o.checkpoint, "parent checkpoint (sft needs pt, rft needs sft)");
  train->add_flag("!--quiet", o.progress, "suppress the progress line");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "sft or rft checkpoint");
  eval->add_flag("--oracle", o.oracle, "replay the reference answers instead of a model");
  eval->add_flag("--samples", o.samples, "also write the per-sample dump");

  auto* ablate = app.add_subcommand("ablate", "compare ablated variants against the full model");
  common(ablate);
  ablate->add_option("--checkpoint", o.checkpoint, "sft or rft checkpoint");
  ablate->add_flag("--drop-ecg", o.ablation.drop[0], "zero the ECG tokens");
  ablate->add_flag("--drop-cxr", o.ablation.drop[1], "zero the CXR tokens");
  ablate->add_flag("--drop-lab", o.ablation.drop[2], "zero the LAB tokens");
  ablate->add_flag("--disable-cmha", o.ablation.disable_cmha, "bypass cyclic attention (F = 0)");
  ablate->add_flag("--disable-cao", o.ablation.disable_cao, "force the contribution gates to 1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*forge) return cmd_forge(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
