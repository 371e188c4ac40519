// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/pipeline.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "tridx/error.hpp"
#include "tridx/tokenizer.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace tridx {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto t = trim(v);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto t = trim(v);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto t = trim(v);
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!trim(item).empty()) out.push_back(to_double(key, item));
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Schema = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>>;

#define TRIDX_SIZE(expr) \
  Field { [](RunConfig& c, const std::string& v) { expr = to_size(#expr, v); }, [](const RunConfig& c) { return std::to_string(expr); } }
#define TRIDX_DOUBLE(expr) \
  Field { [](RunConfig& c, const std::string& v) { expr = to_double(#expr, v); }, [](const RunConfig& c) { return fmt(expr); } }
#define TRIDX_BOOL(expr) \
  Field { [](RunConfig& c, const std::string& v) { expr = to_bool(#expr, v); }, [](const RunConfig& c) { return std::string(expr ? "true" : "false"); } }

const Schema& schema() {
  static const Schema s{
      {"corpus",
       {{"dir", Field{[](RunConfig& c, const std::string& v) { c.corpus_dir = trim(v); },
                      [](const RunConfig& c) { return c.corpus_dir.string(); }}}}},
      {"forge",
       {{"n_train", TRIDX_SIZE(c.forge.n_train)},
        {"n_test", TRIDX_SIZE(c.forge.n_test)},
        {"seed", Field{[](RunConfig& c, const std::string& v) { c.forge.seed = to_u64("forge.seed", v); },
                       [](const RunConfig& c) { return std::to_string(c.forge.seed); }}},
        {"weights", Field{[](RunConfig& c, const std::string& v) {
                            const auto w = to_list("forge.weights", v);
                            if (w.size() != kDiseaseCount) throw ConfigError("forge.weights needs 7 values");
                            std::copy(w.begin(), w.end(), c.forge.weights.begin());
                          },
                          [](const RunConfig& c) {
                            return fmt_list({c.forge.weights.begin(), c.forge.weights.end()});
                          }}},
        {"correlation", Field{[](RunConfig& c, const std::string& v) { c.forge.correlation = to_list("forge.correlation", v); },
                              [](const RunConfig& c) { return fmt_list(c.forge.correlation); }}},
        {"missing_rate", TRIDX_DOUBLE(c.forge.missing_rate)},
        {"disease_fraction_train", TRIDX_DOUBLE(c.forge.disease_fraction_train)},
        {"disease_fraction_test", TRIDX_DOUBLE(c.forge.disease_fraction_test)}}},
      {"model",
       {{"d", Field{[](RunConfig& c, const std::string& v) {
                      const auto d = to_size("model.d", v);
                      c.model.encoder.d = c.model.fusion.d = c.model.lm.d = d;
                    },
                    [](const RunConfig& c) { return std::to_string(c.model.lm.d); }}},
        {"tokens", TRIDX_SIZE(c.model.encoder.tokens)},
        {"hidden", TRIDX_SIZE(c.model.encoder.hidden)},
        {"ecg_channels", TRIDX_SIZE(c.model.encoder.ecg_channels)},
        {"patch", TRIDX_SIZE(c.model.encoder.patch)},
        {"fusion_heads", TRIDX_SIZE(c.model.fusion.heads)},
        {"per_pass_params", TRIDX_BOOL(c.model.fusion.per_pass_params)},
        {"vector_gates", TRIDX_BOOL(c.model.fusion.vector_gates)},
        {"vocab", TRIDX_SIZE(c.model.lm.vocab)},
        {"layers", TRIDX_SIZE(c.model.lm.layers)},
        {"heads", TRIDX_SIZE(c.model.lm.heads)},
        {"ffn", TRIDX_SIZE(c.model.lm.ffn)},
        {"context", TRIDX_SIZE(c.model.lm.context)},
        {"lora_rank", TRIDX_SIZE(c.model.lm.lora_rank)},
        {"lora_alpha", TRIDX_DOUBLE(c.model.lm.lora_alpha)},
        {"train_encoders", TRIDX_BOOL(c.model.train_encoders)}}},
      {"train",
       {{"seed", Field{[](RunConfig& c, const std::string& v) { c.train.seed = c.model.seed = to_u64("train.seed", v); },
                       [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
        {"epochs_warmup", TRIDX_SIZE(c.train.epochs_warmup)},
        {"epochs_pt", TRIDX_SIZE(c.train.epochs_pt)},
        {"epochs_sft", TRIDX_SIZE(c.train.epochs_sft)},
        {"rft_iters", TRIDX_SIZE(c.train.rft_iters)},
        {"batch", TRIDX_SIZE(c.train.batch)},
        {"rft_batch", TRIDX_SIZE(c.train.rft_batch)},
        {"lr_warmup", TRIDX_DOUBLE(c.train.lr_warmup)},
        {"lr_pt", TRIDX_DOUBLE(c.train.lr_pt)},
        {"lr_sft", TRIDX_DOUBLE(c.train.lr_sft)},
        {"lr_rft", TRIDX_DOUBLE(c.train.lr_rft)},
        {"group", TRIDX_SIZE(c.train.rft.group)},
        {"beta", TRIDX_DOUBLE(c.train.rft.beta)},
        {"rft_inner_epochs", TRIDX_SIZE(c.train.rft.inner_epochs)},
        {"clip_epsilon", TRIDX_DOUBLE(c.train.rft.clip_epsilon)},
        {"rft_temperature", TRIDX_DOUBLE(c.train.rft_temperature)},
        {"rft_max_tokens", TRIDX_SIZE(c.train.rft_max_tokens)}}},
      {"eval",
       {{"max_tokens", TRIDX_SIZE(c.eval.max_tokens)},
        {"averaging", Field{[](RunConfig& c, const std::string& v) {
                              const auto t = trim(v);
                              if (t == "micro") c.eval.averaging = Averaging::kMicro;
                              else if (t == "macro") c.eval.averaging = Averaging::kMacro;
                              else throw ConfigError("eval.averaging must be micro or macro");
                            },
                            [](const RunConfig& c) {
                              return std::string(c.eval.averaging == Averaging::kMicro ? "micro" : "macro");
                            }}}}},
  };
  return s;
}

#undef TRIDX_SIZE
#undef TRIDX_DOUBLE
#undef TRIDX_BOOL

}  // namespace

void RunConfig::validate() const {
  forge.validate();
  model.validate();
  if (model.seed != train.seed) throw ConfigError("model seed and train seed disagree");
  if (train.batch == 0 || train.rft_batch == 0) throw ConfigError("batch sizes must be positive");
  if (train.rft.group < 2) throw ConfigError("GRPO group size must be at least 2");
  if (train.rft.beta < 0.0) throw ConfigError("beta must be non-negative");
  if (train.rft.inner_epochs == 0) throw ConfigError("rft_inner_epochs must be positive");
  for (double lr : {train.lr_warmup, train.lr_pt, train.lr_sft, train.lr_rft}) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  }
  if (train.rft_max_tokens == 0 || eval.max_tokens == 0) throw ConfigError("max_tokens must be positive");
}

RunConfig parse_run_config(const std::string& ini_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(ini_text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    const auto sit = std::find_if(schema().begin(), schema().end(), [&](const auto& s) { return s.first == section; });
    if (sit == schema().end()) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' must live in a section");
      throw ConfigError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      const auto fit = std::find_if(sit->second.begin(), sit->second.end(), [&](const auto& f) { return f.first == key; });
      if (fit == sit->second.end()) throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      fit->second.set(cfg, value.get_value<std::string>());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [section, fields] : schema()) {
    out += "[" + section + "]\n";
    for (const auto& [key, field] : fields) out += key + " = " + field.get(cfg) + "\n";
    out += "\n";
  }
  return out;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, std::numeric_limits<int>::max());
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

std::string model_digest(const ModelConfig& cfg) { return digest_hex(cfg.canonical()); }

RunLog::RunLog(const fs::path& path, bool progress)
    : out_(std::make_shared<std::ofstream>(path, std::ios::binary | std::ios::trunc)), progress_(progress) {
  if (!*out_) throw IoError("cannot write log " + path.string());
}

void RunLog::record(const std::string& json_line) {
  if (out_) {
    *out_ << json_line << '\n';
    out_->flush();
  }
}

void RunLog::progress(const std::string& line) const {
  if (progress_) std::cerr << line << std::endl;
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  c.manifest = config_from_manifest(slurp(dir / "manifest.json"));
  c.train = read_corpus(dir / "train.jsonl");
  c.test = read_corpus(dir / "test.jsonl");
  return c;
}

namespace {

struct TextExample {
  std::vector<int> prompt;
  std::vector<int> answer;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t stream, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 eng(derive_seed(derive_seed(seed, stream), epoch));
  std::shuffle(order.begin(), order.end(), eng);
  return order;
}

std::string epoch_line(Stage stage, std::size_t epoch, double loss, double grad_norm, std::size_t steps) {
  json j;
  j["stage"] = stage_name(stage);
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["grad_norm"] = grad_norm;
  j["steps"] = steps;
  return j.dump();
}

// Minibatch loop shared by the supervised stages. `loss_of(i)` builds the
// graph for example i.
double supervised_loop(TriModalModel& model, Stage stage, std::size_t n, std::size_t epochs, double lr,
                       const TrainConfig& cfg, RunLog& log, const std::function<Tensor(std::size_t)>& loss_of) {
  if (n == 0) throw DataError(std::string("no records for stage ") + std::string(stage_name(stage)));
  Adam opt(model.params().trainable(), AdamConfig{.lr = lr});
  double last = 0.0;
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, static_cast<std::uint64_t>(stage) + 1, epoch);
    double total = 0.0, norms = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t end = std::min(n, start + cfg.batch);
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Tensor loss = loss_of(order[k]);
        total += loss.item();
        backward(scale(loss, w));
      }
      norms += opt.step();
      ++steps;
    }
    last = total / static_cast<double>(n);
    log.record(epoch_line(stage, epoch, last, norms / static_cast<double>(steps), steps));
    log.progress(std::string(stage_name(stage)) + " epoch " + std::to_string(epoch) + "/" + std::to_string(epochs) +
                 " loss " + fmt(last));
  }
  return last;
}

std::vector<std::size_t> records_where(const std::vector<QARecord>& recs, const std::function<bool(const QARecord&)>& f) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (f(recs[i])) out.push_back(i);
  return out;
}

}  // namespace

double run_warmup(TriModalModel& model, const std::vector<QARecord>& train, const TrainConfig& cfg, RunLog& log) {
  model.set_stage(Stage::kWarmup);
  std::vector<TextExample> ex;
  for (const auto& r : train) ex.push_back({Tokenizer::encode(r.question), Tokenizer::encode(r.answer)});
  const std::size_t m = model.config().encoder.tokens;
  return supervised_loop(model, Stage::kWarmup, ex.size(), cfg.epochs_warmup, cfg.lr_warmup, cfg, log,
                         [&](std::size_t i) {
                           return answer_nll(model.lm(), splice(model.lm(), ex[i].prompt, ex[i].answer, {}, m));
                         });
}

double run_pt(TriModalModel& model, const std::vector<QARecord>& train, const TrainConfig& cfg, RunLog& log) {
  model.set_stage(Stage::kPt);
  const auto idx = records_where(train, [](const QARecord& r) { return r.level != QaLevel::kDisease; });
  std::vector<TextExample> ex;
  for (std::size_t i : idx) ex.push_back({Tokenizer::encode(train[i].question), Tokenizer::encode(train[i].answer)});
  return supervised_loop(model, Stage::kPt, ex.size(), cfg.epochs_pt, cfg.lr_pt, cfg, log, [&](std::size_t i) {
    const Example e{ex[i].prompt, ex[i].answer, model.project(train[idx[i]].bundle)};
    return loss_pt(model, std::span<const Example>(&e, 1));
  });
}

double run_sft(TriModalModel& model, const std::vector<QARecord>& train, const TrainConfig& cfg, RunLog& log,
               const FusionAblation& ablation) {
  model.set_stage(Stage::kSft);
  const auto idx = records_where(train, [](const QARecord& r) { return r.level == QaLevel::kDisease; });
  std::vector<Example> ex;
  {
    // encoders and projectors are frozen from here on
    NoGradGuard ng;
    for (std::size_t i : idx) {
      ex.push_back({Tokenizer::encode(train[i].question), Tokenizer::encode(train[i].answer), model.project(train[i].bundle)});
    }
  }
  return supervised_loop(model, Stage::kSft, ex.size(), cfg.epochs_sft, cfg.lr_sft, cfg, log, [&](std::size_t i) {
    return loss_sft(model, std::span<const Example>(&ex[i], 1), ablation);
  });
}

double run_rft(TriModalModel& policy, const TriModalModel& reference, const std::vector<QARecord>& train,
               const TrainConfig& cfg, RunLog& log) {
  policy.set_stage(Stage::kRft);
  std::vector<RftPrompt> prompts;
  {
    NoGradGuard ng;
    for (const auto& r : train) {
      if (r.level != QaLevel::kDisease) continue;
      prompts.push_back({Tokenizer::encode(r.question), policy.project(r.bundle), r.gold()});
    }
  }
  if (prompts.empty()) throw DataError("no disease-level records for rft");
  const std::size_t n = prompts.size();
  LmPolicy pol(policy, reference, std::move(prompts), cfg.rft_temperature, cfg.rft_max_tokens);
  Adam opt(policy.params().trainable(), AdamConfig{.lr = cfg.lr_rft});
  double recent = 0.0;
  std::size_t window = 0;
  for (std::size_t it = 0; it < cfg.rft_iters; ++it) {
    Rng pick(derive_seed(derive_seed(cfg.seed, 0x52465400ULL), it));
    std::vector<std::size_t> batch;
    for (std::size_t b = 0; b < cfg.rft_batch; ++b) batch.push_back(pick.index(n));
    const RftStepMetrics m = rft_step(pol, opt, batch, cfg.rft, cfg.seed, it);
    json j = json::parse(metrics_json(m));
    j["stage"] = "rft";
    log.record(j.dump());
    if (it + 50 >= cfg.rft_iters) {
      recent += m.mean_reward;
      ++window;
    }
    if ((it + 1) % 10 == 0 || it + 1 == cfg.rft_iters) {
      log.progress("rft iter " + std::to_string(it + 1) + "/" + std::to_string(cfg.rft_iters) + " reward " +
                   fmt(m.mean_reward) + " jaccard " + fmt(m.mean_jaccard) + " format " + fmt(m.format_rate) + " kl " +
                   fmt(m.mean_kl));
    }
  }
  return window ? recent / static_cast<double>(window) : 0.0;
}

std::unique_ptr<TriModalModel> load_model(const RunConfig& cfg, const fs::path& checkpoint, CheckpointHeader* header) {
  auto model = std::make_unique<TriModalModel>(cfg.model);
  const auto h = load_checkpoint(checkpoint.string(), model_digest(cfg.model), model->params());
  if (header) *header = h;
  return model;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

}  // namespace

StageArtifacts train_stage(const RunConfig& cfg, const Corpus& corpus, Stage stage,
                           const std::optional<fs::path>& parent, const fs::path& out_dir, bool progress) {
  cfg.validate();
  if (stage == Stage::kWarmup) throw UsageError("warmup runs as part of the pt stage");
  CheckpointHeader parent_header;
  if (stage == Stage::kPt) {
    if (parent) throw UsageError("pt starts from a fresh model and takes no --checkpoint");
  } else {
    const char* need = stage == Stage::kSft ? "pt" : "sft";
    if (!parent) {
      throw UsageError(std::string(stage_name(stage)) + " needs a " + need + " checkpoint (pass --checkpoint)");
    }
    parent_header = read_checkpoint_header(parent->string());
    if (parent_header.stage != need) {
      throw UsageError(std::string(stage_name(stage)) + " must start from a " + need + " checkpoint, got a " +
                       parent_header.stage + " checkpoint");
    }
    if (stage == Stage::kRft && parent_header.lineage.rfind("pt:", 0) != 0) {
      throw UsageError("sft checkpoint has no pt ancestor in its lineage");
    }
  }
  ensure_dir(out_dir);
  const std::string name(stage_name(stage));
  StageArtifacts art;
  art.checkpoint = out_dir / (name + ".ckpt");
  art.log = out_dir / (name + ".log.jsonl");
  art.config = out_dir / (name + ".config.ini");
  write_text(art.config, dump_run_config(cfg));
  RunLog log(art.log, progress);

  std::unique_ptr<TriModalModel> model;
  if (stage == Stage::kPt) {
    model = std::make_unique<TriModalModel>(cfg.model);
    if (cfg.train.epochs_warmup > 0) run_warmup(*model, corpus.train, cfg.train, log);
    run_pt(*model, corpus.train, cfg.train, log);
  } else {
    model = load_model(cfg, *parent);
    if (stage == Stage::kSft) {
      run_sft(*model, corpus.train, cfg.train, log);
    } else {
      const auto reference = load_model(cfg, *parent);
      run_rft(*model, *reference, corpus.train, cfg.train, log);
    }
  }

  art.header.stage = name;
  art.header.config_digest = model_digest(cfg.model);
  if (parent) {
    const std::string link = parent_header.stage + ":" + digest_hex(slurp(*parent));
    art.header.lineage = parent_header.lineage.empty() ? link : parent_header.lineage + ";" + link;
  }
  save_checkpoint(art.checkpoint.string(), art.header, model->params());
  return art;
}

namespace {

std::unique_ptr<TriModalModel> load_eval_model(const RunConfig& cfg, const fs::path& checkpoint) {
  CheckpointHeader h = read_checkpoint_header(checkpoint.string());
  if (h.stage != "sft" && h.stage != "rft") {
    throw UsageError("evaluation needs an sft or rft checkpoint, got a " + h.stage + " checkpoint");
  }
  return load_model(cfg, checkpoint);
}

}  // namespace

EvalReport evaluate_checkpoint(const RunConfig& cfg, const fs::path& checkpoint, const std::vector<QARecord>& records,
                               const FusionAblation& ablation) {
  const auto model = load_eval_model(cfg, checkpoint);
  ModelResponder responder(*model, ablation, cfg.eval.max_tokens);
  return evaluate_run(responder, records, cfg.eval.averaging);
}

std::vector<std::pair<std::string, FusionAblation>> ablation_variants(const FusionAblation& flags) {
  std::vector<std::pair<std::string, FusionAblation>> out;
  for (Modality m : kModalities) {
    if (!flags.drop[static_cast<std::size_t>(m)]) continue;
    FusionAblation a;
    a.drop[static_cast<std::size_t>(m)] = true;
    out.emplace_back("drop_" + std::string(modality_name(m)), a);
  }
  if (flags.disable_cmha) {
    FusionAblation a;
    a.disable_cmha = true;
    out.emplace_back("disable_cmha", a);
  }
  if (flags.disable_cao) {
    FusionAblation a;
    a.disable_cao = true;
    out.emplace_back("disable_cao", a);
  }
  return out;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const fs::path& checkpoint,
                                      const std::vector<QARecord>& records, const FusionAblation& flags) {
  if (!flags.any()) throw UsageError("ablate needs at least one ablation flag");
  const auto model = load_eval_model(cfg, checkpoint);
  std::vector<AblationRow> rows;
  std::vector<std::pair<std::string, FusionAblation>> variants{{"full", FusionAblation{}}};
  for (auto& v : ablation_variants(flags)) variants.push_back(std::move(v));
  for (const auto& [name, ab] : variants) {
    ModelResponder responder(*model, ab, cfg.eval.max_tokens);
    rows.push_back({name, ab, evaluate_run(responder, records, cfg.eval.averaging)});
  }
  return rows;
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  json arr = json::array();
  const EvalReport& base = rows.front().report;
  for (const auto& r : rows) {
    const EvalReport& e = r.report;
    arr.push_back({{"name", r.name},
                   {"precision", e.precision},
                   {"recall", e.recall},
                   {"f1", e.f1},
                   {"auc", e.auc},
                   {"bleu", e.bleu},
                   {"rouge_l", e.rouge_l},
                   {"format_rate", e.format_rate},
                   {"mean_jaccard", e.mean_jaccard},
                   {"delta_f1", e.f1 - base.f1},
                   {"delta_auc", e.auc - base.auc},
                   {"delta_jaccard", e.mean_jaccard - base.mean_jaccard}});
  }
  json j;
  j["n_samples"] = base.n_samples;
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s %9s %9s %9s\n", "variant", "f1", "delta_f1", "auc", "delta_auc",
                "jaccard", "delta_jac");
  out += buf;
  const EvalReport& base = rows.front().report;
  for (const auto& r : rows) {
    const EvalReport& e = r.report;
    std::snprintf(buf, sizeof buf, "%-14s %9.4f %+9.4f %9.4f %+9.4f %9.4f %+9.4f\n", r.name.c_str(), e.f1, e.f1 - base.f1,
                  e.auc, e.auc - base.auc, e.mean_jaccard, e.mean_jaccard - base.mean_jaccard);
    out += buf;
  }
  return out;
}

}  // namespace tridx
