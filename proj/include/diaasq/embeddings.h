#ifndef DIAASQ_EMBEDDINGS_H_
#define DIAASQ_EMBEDDINGS_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diaasq/autograd.h"
#include "diaasq/corpus.h"

namespace diaasq {

// Frozen per-token vectors produced outside this library, one N x dim block
// per dialogue. On disk ("DQEM" container, all integers u32 little-endian):
//   magic "DQEM" | version | dim | dialogue count |
//   per dialogue: doc_id length, doc_id UTF-8 bytes, N, N*dim f32 row-major.
class EmbeddingStore {
 public:
  static constexpr uint32_t kVersion = 1;

  explicit EmbeddingStore(int dim = 0) : dim_(dim) {}

  // Throws IoError naming the dialogue index on truncation.
  static EmbeddingStore Load(const std::string& path);
  void Save(const std::string& path) const;

  int dim() const { return dim_; }
  int size() const { return static_cast<int>(order_.size()); }
  const std::vector<std::string>& doc_ids() const { return order_; }

  // Values are rounded to f32 on insertion so that memory matches the file.
  void Add(const std::string& doc_id, const ad::Matrix& values);
  const ad::Matrix* Find(const std::string& doc_id) const;

 private:
  int dim_;
  std::vector<std::string> order_;
  std::map<std::string, ad::Matrix> blocks_;
};

struct EmbeddingCheck {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

// Cross-checks dialogue ids and token counts, and optionally the dimension.
EmbeddingCheck VerifyEmbeddings(const Corpus& corpus, const EmbeddingStore& store,
                                std::optional<int> expected_dim = std::nullopt);

}  // namespace diaasq

#endif  // DIAASQ_EMBEDDINGS_H_
