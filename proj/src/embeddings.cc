#include "diaasq/embeddings.h"

#include <fstream>

#include "binary_io.h"
#include "diaasq/error.h"

namespace diaasq {

void EmbeddingStore::Add(const std::string& doc_id, const ad::Matrix& values) {
  if (dim_ == 0) dim_ = static_cast<int>(values.cols());
  if (values.cols() != dim_) {
    throw ShapeError("embedding block for " + doc_id + " has width " +
                     std::to_string(values.cols()) + ", store dimension is " +
                     std::to_string(dim_));
  }
  if (blocks_.contains(doc_id)) throw DataError(doc_id, "embeddings", "duplicate dialogue id");
  ad::Matrix rounded = values.unaryExpr([](double v) {
    return static_cast<double>(static_cast<float>(v));
  });
  order_.push_back(doc_id);
  blocks_.emplace(doc_id, std::move(rounded));
}

const ad::Matrix* EmbeddingStore::Find(const std::string& doc_id) const {
  auto it = blocks_.find(doc_id);
  return it == blocks_.end() ? nullptr : &it->second;
}

void EmbeddingStore::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write embedding file: " + path);
  out.write("DQEM", 4);
  binary::PutU32(out, kVersion);
  binary::PutU32(out, static_cast<uint32_t>(dim_));
  binary::PutU32(out, static_cast<uint32_t>(order_.size()));
  for (const std::string& id : order_) {
    const ad::Matrix& m = blocks_.at(id);
    binary::PutString(out, id);
    binary::PutU32(out, static_cast<uint32_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      binary::PutF32(out, static_cast<float>(m.data()[i]));
    }
  }
  if (!out) throw IoError("failed writing embedding file: " + path);
}

EmbeddingStore EmbeddingStore::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path);
  binary::Reader r(in, path);
  r.ExpectMagic("DQEM");
  const uint32_t version = r.U32();
  if (version != kVersion) {
    throw IoError(path + ": unsupported embedding format version " + std::to_string(version));
  }
  const uint32_t dim = r.U32();
  const uint32_t count = r.U32();
  if (dim == 0) throw IoError(path + ": embedding dimension is zero");
  EmbeddingStore store(static_cast<int>(dim));
  for (uint32_t k = 0; k < count; ++k) {
    r.SetContext(" at dialogue " + std::to_string(k));
    const std::string id = r.String(1u << 20);
    const uint32_t n = r.U32();
    if (n > (1u << 24)) throw IoError(path + ": implausible token count at dialogue " + std::to_string(k));
    ad::Matrix m(n, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.F32();
    store.Add(id, m);
  }
  r.SetContext("");
  if (!r.AtEnd()) throw IoError(path + ": trailing bytes after the last dialogue");
  return store;
}

EmbeddingCheck VerifyEmbeddings(const Corpus& corpus, const EmbeddingStore& store,
                                std::optional<int> expected_dim) {
  EmbeddingCheck check;
  if (expected_dim && *expected_dim != store.dim()) {
    check.problems.push_back("embedding dimension " + std::to_string(store.dim()) +
                             " does not match expected " + std::to_string(*expected_dim));
  }
  for (const Dialogue& d : corpus) {
    const ad::Matrix* m = store.Find(d.id);
    if (m == nullptr) {
      check.problems.push_back("dialogue " + d.id + ": no embedding block");
    } else if (m->rows() != d.num_tokens()) {
      check.problems.push_back("dialogue " + d.id + ": embedding rows " +
                               std::to_string(m->rows()) + " != token count " +
                               std::to_string(d.num_tokens()));
    }
  }
  return check;
}

}  // namespace diaasq
