// Command-line front end. Exit status: 0 success, 1 domain failure (invalid
// data, eval mismatch, divergence), 2 I/O or configuration error.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "diaasq/checkpoint.h"
#include "diaasq/codec.h"
#include "diaasq/config.h"
#include "diaasq/corpus.h"
#include "diaasq/embeddings.h"
#include "diaasq/error.h"
#include "diaasq/eval.h"
#include "diaasq/structure.h"
#include "diaasq/train.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace diaasq;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kIoFailure = 2;

void WriteText(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

const Dialogue& FindDialogue(const Corpus& corpus, const std::string& id) {
  for (const Dialogue& d : corpus) {
    if (d.id == id) return d;
  }
  throw DataError(id, "/", "no dialogue with this doc_id");
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string corpus;
  std::string out;
};

int RunValidate(const ValidateArgs& a) {
  ValidationReport report;
  try {
    report = ValidateCorpus(LoadCorpus(a.corpus));
  } catch (const DataError& e) {
    report.violations.push_back({e.doc_id(), e.path(), e.what()});
  }
  json out = report.ToJson();
  out["corpus"] = a.corpus;
  WriteText(a.out, out.dump(2) + "\n");
  return report.clean() ? kOk : kDomainFailure;
}

struct StatsArgs {
  std::vector<std::string> corpora;
  bool as_json = false;
};

int RunStats(const StatsArgs& a) {
  std::vector<std::pair<std::string, StatsRow>> rows;
  for (const std::string& path : a.corpora) {
    rows.emplace_back(fs::path(path).stem().string(), CorpusStats(LoadCorpus(path)));
  }
  if (a.as_json) {
    json out = json::object();
    for (const auto& [name, row] : rows) out[name] = row.ToJson();
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << FormatStatsTable(rows);
  }
  return kOk;
}

struct RoundtripArgs {
  std::string corpus;
  std::string pair_mode = "strict";
  std::string out;
  bool per_dialogue = false;
};

int RunRoundtrip(const RoundtripArgs& a) {
  DecodeConfig cfg{ParsePairMode(a.pair_mode)};
  const FidelityReport report = RoundtripReport(LoadCorpus(a.corpus), cfg);
  json out = report.ToJson();
  if (!a.per_dialogue) out.erase("dialogues");
  out["pair_mode"] = a.pair_mode;
  WriteText(a.out, out.dump(2) + "\n");
  return report.unexplained_misses == 0 ? kOk : kDomainFailure;
}

struct TrainArgs {
  std::string config;
  std::string train;
  std::string dev;
  std::string out;
  std::string embeddings;
  std::string resume;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> threads;
  std::optional<std::string> pair_mode;
  bool allow_overlap = false;
  bool quiet = false;
};

RunConfig EffectiveConfig(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::Load(a.config);
  for (const std::string& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
    cfg.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.train.empty()) cfg.train_path = a.train;
  if (!a.dev.empty()) cfg.dev_path = a.dev;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (!a.embeddings.empty()) cfg.embeddings_path = a.embeddings;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.threads) cfg.train.threads = *a.threads;
  if (a.pair_mode) cfg.train.decode.pair_mode = ParsePairMode(*a.pair_mode);
  return cfg;
}

int RunTrain(const TrainArgs& a) {
  RunConfig cfg = EffectiveConfig(a);
  cfg.Validate();
  if (cfg.train_path.empty()) throw ConfigError("no training corpus (--train or train = ...)");
  if (cfg.dev_path.empty()) throw ConfigError("no dev corpus (--dev or dev = ...)");
  if (cfg.out_dir.empty()) throw ConfigError("no output directory (--out or out = ...)");
  const bool external = cfg.model.embedding_source == EmbeddingSource::kExternal;
  if (external && cfg.embeddings_path.empty()) {
    throw ConfigError("embedding_source is external but no --embeddings file was given");
  }

  const Corpus train = LoadCorpus(cfg.train_path);
  const Corpus dev = LoadCorpus(cfg.dev_path);
  std::set<std::string> train_ids;
  for (const Dialogue& d : train) train_ids.insert(d.id);
  for (const Dialogue& d : dev) {
    if (train_ids.count(d.id) && !a.allow_overlap) {
      throw ConfigError("dialogue " + d.id +
                        " is in both the training and dev sets (pass --allow-overlap to accept)");
    }
  }

  std::optional<EmbeddingStore> store;
  if (external) {
    store = EmbeddingStore::Load(cfg.embeddings_path);
    for (const Corpus* c : {&train, &dev}) {
      const EmbeddingCheck check = VerifyEmbeddings(*c, *store, cfg.model.d_model);
      if (!check.ok()) throw ConfigError("embedding file mismatch: " + check.problems.front());
    }
  }

  fs::create_directories(cfg.out_dir);
  const fs::path out_dir(cfg.out_dir);
  const std::string state_path = (out_dir / "state.dqst").string();
  const std::string checkpoint_path = (out_dir / "model.dqsk").string();
  const std::string history_path = (out_dir / "history.jsonl").string();
  WriteText((out_dir / "config.txt").string(), cfg.Serialize());

  const EmbeddingStore* store_ptr = store ? &*store : nullptr;
  std::optional<Trainer> trainer;
  std::ios::openmode history_mode = std::ios::out | std::ios::trunc;
  if (!a.resume.empty()) {
    TrainState state = LoadTrainState(a.resume);
    if (state.config.ToJson() != cfg.model.ToJson()) {
      throw ConfigError("model settings differ from the resumed training state");
    }
    trainer.emplace(Trainer::Resume(std::move(state), cfg.train, store_ptr));
    history_mode = std::ios::out | std::ios::app;
  } else {
    std::optional<Vocabulary> vocab;
    if (!external) vocab = Vocabulary::Build(train);
    const int vocab_size = vocab ? vocab->size() : 0;
    trainer.emplace(cfg.model, cfg.train,
                    ScorerParams::Init(cfg.model, vocab_size, cfg.train.seed), std::move(vocab),
                    store_ptr);
  }

  std::ofstream history(history_path, history_mode);
  if (!history) throw IoError("cannot write " + history_path);

  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochRecord& r, const Scorer&) {
    history << r.ToJson().dump() << "\n" << std::flush;
    if (!a.quiet) {
      std::cerr << "epoch " << r.epoch << "  loss " << r.train_loss << "  dev micro F1 "
                << r.dev_micro_f1 << "  dev iden F1 " << r.dev_iden_f1 << "\n";
    }
    return true;
  };
  callbacks.on_best = [&](const EpochRecord& r, const ScorerParams& params) {
    Checkpoint ckpt;
    ckpt.config = cfg.model;
    ckpt.vocabulary = trainer->vocabulary();
    ckpt.params = params;
    ckpt.meta = {{"run_config", cfg.ToJson()},
                 {"epoch", r.epoch},
                 {"dev_micro_f1", r.dev_micro_f1},
                 {"dev_iden_f1", r.dev_iden_f1}};
    SaveCheckpoint(checkpoint_path, ckpt);
  };
  callbacks.on_state = [&](const TrainState& s) {
    TrainState copy = s;
    copy.meta["run_config"] = cfg.ToJson();
    SaveTrainState(state_path, copy);
  };

  const TrainResult result = trainer->Run(train, dev, callbacks);
  if (!a.quiet) {
    std::cerr << "best dev micro F1 " << result.best_dev << " at epoch " << result.best_epoch
              << "; checkpoint " << checkpoint_path << "\n";
  }
  return kOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  std::string embeddings;
  std::string pair_mode = "strict";
  int threads = 1;
};

int RunPredict(const PredictArgs& a) {
  const DecodeConfig decode{ParsePairMode(a.pair_mode)};
  Checkpoint ckpt = LoadCheckpoint(a.checkpoint);
  const Corpus corpus = LoadCorpus(a.corpus);
  std::optional<EmbeddingStore> store;
  if (ckpt.config.embedding_source == EmbeddingSource::kExternal) {
    if (a.embeddings.empty()) throw ConfigError("checkpoint uses external embeddings; pass --embeddings");
    store = EmbeddingStore::Load(a.embeddings);
    const EmbeddingCheck check = VerifyEmbeddings(corpus, *store, ckpt.config.d_model);
    if (!check.ok()) throw ConfigError("embedding file mismatch: " + check.problems.front());
  } else if (!ckpt.vocabulary) {
    throw IoError(a.checkpoint + ": trainable-embedding checkpoint carries no vocabulary");
  }
  const Vocabulary* vocab = ckpt.vocabulary ? &*ckpt.vocabulary : nullptr;
  const Scorer scorer(ckpt.config, std::move(ckpt.params));
  const auto inputs = PrepareInputs(corpus, scorer.config(), vocab, store ? &*store : nullptr);
  SavePredictions(Predict(scorer, inputs, decode, a.threads), a.out);
  return kOk;
}

struct EvalArgs {
  std::string gold;
  std::string pred;
  std::string out;
  std::string cross_distance = "index";
  bool as_json = false;
};

int RunEval(const EvalArgs& a) {
  const CrossDistance distance = ParseCrossDistance(a.cross_distance);
  const MetricReport report = Evaluate(LoadCorpus(a.gold), LoadPredictions(a.pred), distance);
  json out = report.ToJson();
  out["gold"] = a.gold;
  out["predictions"] = a.pred;
  if (!a.out.empty()) WriteText(a.out, out.dump(2) + "\n");
  if (a.as_json) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << report.FormatTable();
  }
  return kOk;
}

struct VerifyArgs {
  std::string corpus;
  std::string embeddings;
  std::optional<int> dim;
};

int RunVerify(const VerifyArgs& a) {
  const EmbeddingStore store = EmbeddingStore::Load(a.embeddings);
  const EmbeddingCheck check = VerifyEmbeddings(LoadCorpus(a.corpus), store, a.dim);
  for (const std::string& p : check.problems) std::cout << p << "\n";
  if (check.ok()) {
    std::cout << "ok: " << store.size() << " dialogues, dim " << store.dim() << "\n";
  }
  return check.ok() ? kOk : kDomainFailure;
}

struct DumpArgs {
  std::string corpus;
  std::string doc_id;
};

int RunDumpStructure(const DumpArgs& a) {
  const Corpus corpus = LoadCorpus(a.corpus);
  json out = json::array();
  for (const Dialogue& d : corpus) {
    if (!a.doc_id.empty() && d.id != a.doc_id) continue;
    json entry = StructureToJson(AnalyzeDialogue(d));
    entry["doc_id"] = d.id;
    out.push_back(std::move(entry));
  }
  if (!a.doc_id.empty()) FindDialogue(corpus, a.doc_id);
  std::cout << out.dump(1) << "\n";
  return kOk;
}

int RunDumpGrid(const DumpArgs& a) {
  const Corpus corpus = LoadCorpus(a.corpus);
  json out = json::array();
  for (const Dialogue& d : corpus) {
    if (!a.doc_id.empty() && d.id != a.doc_id) continue;
    const EncodeResult enc = Encode(d);
    json entry = GridToJson(enc.grid);
    entry["doc_id"] = d.id;
    json conflicts = json::array();
    for (const CellConflict& c : enc.conflicts) {
      conflicts.push_back({{"grid", GridName(c.grid)},
                           {"row", c.row},
                           {"col", c.col},
                           {"kept", LabelName(c.grid, c.kept)},
                           {"rejected", LabelName(c.grid, c.rejected)}});
    }
    entry["conflicts"] = std::move(conflicts);
    out.push_back(std::move(entry));
  }
  if (!a.doc_id.empty()) FindDialogue(corpus, a.doc_id);
  std::cout << out.dump(1) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialogue sentiment quadruple extraction toolkit"};
  app.require_subcommand(1);

  ValidateArgs validate;
  auto* cmd = app.add_subcommand("validate", "Check a corpus file for annotation errors");
  cmd->add_option("corpus", validate.corpus, "Corpus JSON")->required();
  cmd->add_option("--out", validate.out, "Write the report here instead of stdout");

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Print dataset statistics");
  stats_cmd->add_option("corpus", stats.corpora, "Corpus JSON files")->required();
  stats_cmd->add_flag("--json", stats.as_json, "Emit JSON");

  RoundtripArgs roundtrip;
  auto* rt_cmd = app.add_subcommand("roundtrip", "Measure decode(encode(gold)) fidelity");
  rt_cmd->add_option("corpus", roundtrip.corpus, "Corpus JSON")->required();
  rt_cmd->add_option("--pair-mode", roundtrip.pair_mode, "strict or relaxed");
  rt_cmd->add_option("--out", roundtrip.out, "Write the report here instead of stdout");
  rt_cmd->add_flag("--per-dialogue", roundtrip.per_dialogue, "Include per-dialogue counts");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config, "key = value config file");
  train_cmd->add_option("--train", train.train, "Training corpus");
  train_cmd->add_option("--dev", train.dev, "Dev corpus");
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_option("--embeddings", train.embeddings, "Frozen embedding file");
  train_cmd->add_option("--resume", train.resume, "Continue from a state.dqst file");
  train_cmd->add_option("--set", train.overrides, "Override a config key (key=value)");
  train_cmd->add_option("--seed", train.seed, "Random seed");
  train_cmd->add_option("--epochs", train.epochs, "Number of epochs");
  train_cmd->add_option("--threads", train.threads, "Worker threads");
  train_cmd->add_option("--pair-mode", train.pair_mode, "Decode mode for dev scoring");
  train_cmd->add_flag("--allow-overlap", train.allow_overlap,
                      "Accept dialogues present in both train and dev");
  train_cmd->add_flag("--quiet", train.quiet, "No progress output");

  PredictArgs predict;
  auto* pred_cmd = app.add_subcommand("predict", "Predict quadruples with a checkpoint");
  pred_cmd->add_option("--checkpoint", predict.checkpoint, "Model file")->required();
  pred_cmd->add_option("--corpus", predict.corpus, "Corpus JSON")->required();
  pred_cmd->add_option("--out", predict.out, "Predictions JSON")->required();
  pred_cmd->add_option("--embeddings", predict.embeddings, "Frozen embedding file");
  pred_cmd->add_option("--pair-mode", predict.pair_mode, "strict or relaxed");
  pred_cmd->add_option("--threads", predict.threads, "Worker threads");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold");
  eval_cmd->add_option("--gold", eval.gold, "Gold corpus")->required();
  eval_cmd->add_option("--pred", eval.pred, "Predictions or corpus JSON")->required();
  eval_cmd->add_option("--out", eval.out, "Also write the JSON report here");
  eval_cmd->add_option("--cross-distance", eval.cross_distance, "index or tree");
  eval_cmd->add_flag("--json", eval.as_json, "Print JSON instead of the table");

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Check an embedding file against a corpus");
  verify_cmd->add_option("--corpus", verify.corpus, "Corpus JSON")->required();
  verify_cmd->add_option("--embeddings", verify.embeddings, "Embedding file")->required();
  verify_cmd->add_option("--dim", verify.dim, "Expected vector width");

  DumpArgs dump_structure;
  auto* ds_cmd = app.add_subcommand("dump-structure", "Print threads, masks and positions");
  ds_cmd->add_option("corpus", dump_structure.corpus, "Corpus JSON")->required();
  ds_cmd->add_option("--doc", dump_structure.doc_id, "Only this dialogue");

  DumpArgs dump_grid;
  auto* dg_cmd = app.add_subcommand("dump-grid", "Print the gold label grids");
  dg_cmd->add_option("corpus", dump_grid.corpus, "Corpus JSON")->required();
  dg_cmd->add_option("--doc", dump_grid.doc_id, "Only this dialogue");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoFailure;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "validate") return RunValidate(validate);
    if (name == "stats") return RunStats(stats);
    if (name == "roundtrip") return RunRoundtrip(roundtrip);
    if (name == "train") return RunTrain(train);
    if (name == "predict") return RunPredict(predict);
    if (name == "eval") return RunEval(eval);
    if (name == "verify") return RunVerify(verify);
    if (name == "dump-structure") return RunDumpStructure(dump_structure);
    if (name == "dump-grid") return RunDumpGrid(dump_grid);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const MismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDomainFailure;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }
  return kDomainFailure;
}
