#include "diaasq/checkpoint.h"

#include <fstream>

#include "binary_io.h"
#include "diaasq/error.h"

namespace diaasq {

using nlohmann::json;

namespace {

void PutTensor(std::ostream& out, const std::string& name, const ad::Matrix& m,
               bool wide) {
  binary::PutString(out, name);
  binary::PutU32(out, 2);
  binary::PutU32(out, static_cast<uint32_t>(m.rows()));
  binary::PutU32(out, static_cast<uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (wide) {
      binary::PutF64(out, m.data()[i]);
    } else {
      binary::PutF32(out, static_cast<float>(m.data()[i]));
    }
  }
}

std::pair<std::string, ad::Matrix> ReadTensor(binary::Reader& r, bool wide) {
  std::string name = r.String(1u << 16);
  const uint32_t rank = r.U32();
  if (rank < 1 || rank > 2) throw IoError("tensor " + name + ": unsupported rank");
  uint32_t rows = r.U32();
  uint32_t cols = 1;
  if (rank == 2) cols = r.U32();
  if (rank == 1) std::swap(rows, cols);  // vectors load as 1 x n
  ad::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = wide ? r.F64() : r.F32();
  return {std::move(name), std::move(m)};
}

int VocabSize(const std::optional<Vocabulary>& v) { return v ? v->size() : 0; }

json Header(const ModelConfig& config, const std::optional<Vocabulary>& vocab,
            const json& meta) {
  json header = {{"model", config.ToJson()}, {"meta", meta}};
  header["vocabulary"] = vocab ? vocab->ToJson() : json(nullptr);
  return header;
}

void ParseHeader(const std::string& text, const std::string& path, ModelConfig& config,
                 std::optional<Vocabulary>& vocab, json& meta) {
  json header;
  try {
    header = json::parse(text);
    config = ModelConfig::FromJson(header.at("model"));
    meta = header.value("meta", json::object());
  } catch (const json::exception& e) {
    throw IoError(path + ": bad config block: " + e.what());
  }
  if (header.contains("vocabulary") && !header["vocabulary"].is_null()) {
    vocab = Vocabulary::FromJson(header["vocabulary"]);
  }
}

// Overwrites the values of `params` by name; every tensor must be present.
void Assign(ScorerParams& params, std::map<std::string, ad::Matrix>& loaded,
            const std::string& prefix, const std::string& path) {
  for (NamedTensor& t : params.tensors()) {
    auto it = loaded.find(prefix + t.name);
    if (it == loaded.end()) throw ShapeError(path + ": missing tensor " + prefix + t.name);
    if (it->second.rows() != t.value.rows() || it->second.cols() != t.value.cols()) {
      throw ShapeError(path + ": tensor " + prefix + t.name + " has shape " +
                       std::to_string(it->second.rows()) + "x" +
                       std::to_string(it->second.cols()) + ", expected " +
                       std::to_string(t.value.rows()) + "x" + std::to_string(t.value.cols()));
    }
    t.value = std::move(it->second);
    loaded.erase(it);
  }
}

}  // namespace

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write("DQSK", 4);
  binary::PutU32(out, Checkpoint::kVersion);
  binary::PutString(out, Header(ckpt.config, ckpt.vocabulary, ckpt.meta).dump());
  binary::PutU32(out, static_cast<uint32_t>(ckpt.params.size()));
  for (const NamedTensor& t : ckpt.params.tensors()) PutTensor(out, t.name, t.value, false);
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  binary::Reader r(in, path);
  r.ExpectMagic("DQSK");
  const uint32_t version = r.U32();
  if (version != Checkpoint::kVersion) {
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ParseHeader(r.String(), path, ckpt.config, ckpt.vocabulary, ckpt.meta);
  const uint32_t count = r.U32();
  std::map<std::string, ad::Matrix> loaded;
  for (uint32_t k = 0; k < count; ++k) loaded.insert(ReadTensor(r, false));
  ckpt.params = ScorerParams::Init(ckpt.config, VocabSize(ckpt.vocabulary), 0);
  Assign(ckpt.params, loaded, "", path);
  if (!loaded.empty()) throw ShapeError(path + ": unexpected tensor " + loaded.begin()->first);
  return ckpt;
}

void SaveTrainState(const std::string& path, const TrainState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write training state: " + path);
  out.write("DQST", 4);
  binary::PutU32(out, TrainState::kVersion);
  json meta = s.meta;
  meta["step"] = s.step;
  meta["epoch"] = s.epoch;
  meta["best_dev"] = s.best_dev;
  meta["rng_state"] = s.rng_state;
  binary::PutString(out, Header(s.config, s.vocabulary, meta).dump());
  binary::PutU32(out, static_cast<uint32_t>(3 * s.params.size()));
  for (int i = 0; i < s.params.size(); ++i) {
    const NamedTensor& t = s.params.tensors()[i];
    PutTensor(out, t.name, t.value, true);
    PutTensor(out, "adam.m/" + t.name, s.adam_m[i], true);
    PutTensor(out, "adam.v/" + t.name, s.adam_v[i], true);
  }
  if (!out) throw IoError("failed writing training state: " + path);
}

TrainState LoadTrainState(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open training state: " + path);
  binary::Reader r(in, path);
  r.ExpectMagic("DQST");
  const uint32_t version = r.U32();
  if (version != TrainState::kVersion) {
    throw IoError(path + ": unsupported training state version " + std::to_string(version));
  }
  TrainState s;
  json meta;
  ParseHeader(r.String(), path, s.config, s.vocabulary, meta);
  try {
    s.step = meta.at("step").get<int64_t>();
    s.epoch = meta.at("epoch").get<int>();
    s.best_dev = meta.at("best_dev").get<double>();
    s.rng_state = meta.at("rng_state").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(path + ": bad training state header: " + e.what());
  }
  for (const char* key : {"step", "epoch", "best_dev", "rng_state"}) meta.erase(key);
  s.meta = std::move(meta);
  const uint32_t count = r.U32();
  std::map<std::string, ad::Matrix> loaded;
  for (uint32_t k = 0; k < count; ++k) loaded.insert(ReadTensor(r, true));
  s.params = ScorerParams::Init(s.config, VocabSize(s.vocabulary), 0);
  Assign(s.params, loaded, "", path);
  ScorerParams m = s.params;
  ScorerParams v = s.params;
  Assign(m, loaded, "adam.m/", path);
  Assign(v, loaded, "adam.v/", path);
  for (int i = 0; i < s.params.size(); ++i) {
    s.adam_m.push_back(std::move(m.tensors()[i].value));
    s.adam_v.push_back(std::move(v.tensors()[i].value));
  }
  return s;
}

}  // namespace diaasq
