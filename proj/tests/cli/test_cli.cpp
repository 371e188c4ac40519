// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Drives the tridx executable end to end on a tiny corpus and model.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::path(TRIDX_CLI_WORKDIR);

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run tridx(const std::string& args) {
  const fs::path o = kRoot / "stdout.txt", e = kRoot / "stderr.txt";
  const std::string cmd = std::string(TRIDX_CLI_PATH) + " " + args + " > " + o.string() + " 2> " + e.string();
  const int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(o), slurp(e)};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) v.push_back(l);
  return v;
}

// Tiny model, short generations; the corpus has 50 train and 8 test records.
const char* kConfig = R"(
[corpus]
dir = corpus
[forge]
n_train = 50
n_test = 8
seed = 0
[model]
d = 16
tokens = 2
hidden = 8
fusion_heads = 2
layers = 1
heads = 2
ffn = 32
lora_rank = 2
[train]
seed = 0
epochs_warmup = 0
epochs_pt = 2
epochs_sft = 1
rft_iters = 2
group = 2
rft_batch = 1
rft_max_tokens = 8
[eval]
max_tokens = 16
)";

// One shared workspace: forge once, train pt and sft once.
struct Workspace {
  Workspace() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    cfg = (kRoot / "run.ini").string();
    spit(cfg, kConfig);
    corpus = (kRoot / "corpus").string();
    REQUIRE(tridx("forge --config " + cfg + " --out " + corpus).code == 0);
    base = "--config " + cfg + " --corpus " + corpus;
    REQUIRE(tridx("train " + base + " --stage pt --quiet --out " + (kRoot / "run").string()).code == 0);
    REQUIRE(tridx("train " + base + " --stage sft --quiet --checkpoint " + (kRoot / "run/pt.ckpt").string() +
                  " --out " + (kRoot / "run").string())
                .code == 0);
  }
  std::string cfg, corpus, base;
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("forge: n=12 corpus, deterministic rerun, missing parent directory") {
  const auto& w = ws();
  const fs::path ini = kRoot / "twelve.ini";
  spit(ini, "[forge]\nn_train = 12\nn_test = 3\n");
  const fs::path a = kRoot / "twelve_a", b = kRoot / "twelve_b";
  REQUIRE(tridx("forge --config " + ini.string() + " --out " + a.string()).code == 0);
  REQUIRE(tridx("forge --config " + ini.string() + " --out " + b.string()).code == 0);
  CHECK(lines(slurp(a / "train.jsonl")).size() == 12);
  CHECK(lines(slurp(a / "test.jsonl")).size() == 3);
  for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json", "forge.config.ini"})
    CHECK(slurp(a / f) == slurp(b / f));

  const Run missing = tridx("forge --config " + ini.string() + " --out " + (kRoot / "no/such/dir").string());
  CHECK(missing.code != 0);
  CHECK(missing.err.find("create it first") != std::string::npos);
  (void)w;
}

TEST_CASE("train: stage gates") {
  const auto& w = ws();
  const std::string out = " --out " + (kRoot / "gate").string();
  Run r = tridx("train " + w.base + " --stage rft --quiet" + out);
  CHECK(r.code == 1);
  CHECK(r.err.find("sft") != std::string::npos);
  r = tridx("train " + w.base + " --stage rft --quiet --checkpoint " + (kRoot / "run/pt.ckpt").string() + out);
  CHECK(r.code == 1);
  r = tridx("train " + w.base + " --stage sft --quiet" + out);
  CHECK(r.code == 1);
  r = tridx("train " + w.base + " --stage pt --quiet --checkpoint " + (kRoot / "run/sft.ckpt").string() + out);
  CHECK(r.code == 1);
  CHECK(tridx("train " + w.base + " --stage bogus" + out).code == 1);
  CHECK_FALSE(fs::exists(kRoot / "gate/rft.ckpt"));
}

TEST_CASE("train: pt loss falls over two epochs, artifacts written") {
  ws();
  const auto log = lines(slurp(kRoot / "run/pt.log.jsonl"));
  std::vector<double> losses;
  for (const auto& l : log) {
    const auto j = json::parse(l);
    if (j["stage"] == "pt") losses.push_back(j["loss"].get<double>());
  }
  REQUIRE(losses.size() == 2);
  CHECK(losses[1] < losses[0]);
  CHECK(fs::exists(kRoot / "run/pt.config.ini"));
  CHECK(fs::exists(kRoot / "run/sft.config.ini"));
  CHECK(slurp(kRoot / "run/sft.config.ini").find("[train]") != std::string::npos);
}

TEST_CASE("train: rerunning a stage from the same parent reproduces the log") {
  const auto& w = ws();
  const fs::path again = kRoot / "again";
  REQUIRE(tridx("train " + w.base + " --stage sft --quiet --checkpoint " + (kRoot / "run/pt.ckpt").string() +
                " --out " + again.string())
              .code == 0);
  CHECK(slurp(again / "sft.log.jsonl") == slurp(kRoot / "run/sft.log.jsonl"));
  CHECK(slurp(again / "sft.ckpt") == slurp(kRoot / "run/sft.ckpt"));

  REQUIRE(tridx("train " + w.base + " --stage rft --quiet --checkpoint " + (again / "sft.ckpt").string() + " --out " +
                again.string())
              .code == 0);
  const auto rft = lines(slurp(again / "rft.log.jsonl"));
  REQUIRE(rft.size() == 2);
  const auto j = json::parse(rft[0]);
  for (const char* k : {"mean_reward", "mean_jaccard", "format_rate", "mean_kl"}) CHECK(j.contains(k));
}

TEST_CASE("eval: oracle replay, schema, byte-identical reports") {
  const auto& w = ws();
  const fs::path oracle = kRoot / "oracle";
  REQUIRE(tridx("eval " + w.base + " --oracle --out " + oracle.string()).code == 0);
  const auto j = json::parse(slurp(oracle / "eval.json"));
  for (const char* k : {"precision", "recall", "f1", "auc", "bleu", "rouge_l", "format_rate", "mean_jaccard"})
    CHECK(j[k].get<double>() == 1.0);

  const std::string ck = " --checkpoint " + (kRoot / "run/sft.ckpt").string();
  const fs::path a = kRoot / "eval_a", b = kRoot / "eval_b";
  REQUIRE(tridx("eval " + w.base + ck + " --samples --out " + a.string()).code == 0);
  REQUIRE(tridx("eval " + w.base + ck + " --samples --out " + b.string()).code == 0);
  for (const char* f : {"eval.json", "eval.txt", "eval.samples.jsonl", "eval.config.ini"})
    CHECK(slurp(a / f) == slurp(b / f));
  const auto r = json::parse(slurp(a / "eval.json"));
  CHECK(r.contains("mean_jaccard"));
  CHECK(r.contains("format_rate"));
  CHECK(lines(slurp(a / "eval.samples.jsonl")).size() == 8);

  CHECK(tridx("eval " + w.base + " --checkpoint " + (kRoot / "run/pt.ckpt").string() + " --out " + a.string()).code ==
        1);
}

TEST_CASE("eval: version mismatch and bad config are refused") {
  const auto& w = ws();
  const fs::path bad = kRoot / "badcorpus";
  fs::remove_all(bad);
  fs::copy(w.corpus, bad);
  auto m = json::parse(slurp(bad / "manifest.json"));
  m["taxonomy_version"] = "v0";
  spit(bad / "manifest.json", m.dump());
  const Run r = tridx("eval --config " + w.cfg + " --corpus " + bad.string() + " --oracle --out " +
                      (kRoot / "bad_eval").string());
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());

  const fs::path ini = kRoot / "typo.ini";
  spit(ini, "[train]\nepochs_ptt = 3\n");
  const Run t = tridx("eval --config " + ini.string() + " --oracle --out " + (kRoot / "typo").string());
  CHECK(t.code == 1);
  CHECK(t.err.find("epochs_ptt") != std::string::npos);
}

TEST_CASE("ablate: usage error without flags, side-by-side rows with flags") {
  const auto& w = ws();
  const std::string ck = " --checkpoint " + (kRoot / "run/sft.ckpt").string();
  const fs::path out = kRoot / "ablate";
  CHECK(tridx("ablate " + w.base + ck + " --out " + out.string()).code == 1);
  REQUIRE(tridx("ablate " + w.base + ck + " --disable-cmha --disable-cao --out " + out.string()).code == 0);
  const auto j = json::parse(slurp(out / "ablation.json"));
  std::vector<std::string> names;
  for (const auto& row : j["rows"]) names.push_back(row["name"]);
  CHECK(names == std::vector<std::string>{"full", "disable_cmha", "disable_cao"});
  const std::string table = slurp(out / "ablation.txt");
  CHECK(table.find("disable_cmha") != std::string::npos);
  CHECK(table.find("disable_cao") != std::string::npos);
}
