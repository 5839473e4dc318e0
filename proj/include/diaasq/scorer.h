#ifndef DIAASQ_SCORER_H_
#define DIAASQ_SCORER_H_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "diaasq/autograd.h"
#include "diaasq/codec.h"
#include "diaasq/corpus.h"
#include "diaasq/structure.h"
#include "json.hpp"

namespace diaasq {

enum class EmbeddingSource { kTrainable, kExternal };

std::string_view EmbeddingSourceName(EmbeddingSource source);
EmbeddingSource ParseEmbeddingSource(std::string_view text);

struct ModelConfig {
  int d_model = 128;
  int n_heads = 4;
  int base_layers = 1;
  int ffn_dim = 256;
  int tag_dim = 64;
  double rope_theta = 10000.0;
  double dropout = 0.2;
  EmbeddingSource embedding_source = EmbeddingSource::kTrainable;

  // Throws ConfigError on a violated divisibility or range constraint.
  void Validate() const;
  nlohmann::json ToJson() const;
  static ModelConfig FromJson(const nlohmann::json& raw);
};

// Parameters of the two optimizer groups.
enum class ParamGroup { kEncoder, kHead };

struct NamedTensor {
  std::string name;
  ad::Matrix value;
  ParamGroup group = ParamGroup::kHead;
  bool decay = true;  // subject to weight decay
};

using Gradients = std::vector<ad::Matrix>;

class ScorerParams {
 public:
  ScorerParams() = default;

  // Random initialization; `vocab_size` is ignored for external embeddings.
  static ScorerParams Init(const ModelConfig& config, int vocab_size, uint64_t seed);

  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }
  int size() const { return static_cast<int>(tensors_.size()); }

  int Index(std::string_view name) const;  // throws ShapeError if absent
  const ad::Matrix& Get(std::string_view name) const;
  ad::Matrix& Get(std::string_view name);

  void Add(std::string name, ad::Matrix value, ParamGroup group, bool decay);
  Gradients ZeroGradients() const;

 private:
  std::vector<NamedTensor> tensors_;
  std::map<std::string, int, std::less<>> index_;
};

// Everything forward() needs about one dialogue besides parameters.
struct DialogueInput {
  const Dialogue* dialogue = nullptr;
  DialogueStructure structure;
  std::vector<int> token_ids;              // trainable mode
  const ad::Matrix* external = nullptr;    // external mode, N x d_model
};

// Tensor names of the three interaction views, in pooling order.
inline constexpr std::array<std::string_view, 3> kViewNames = {"thread", "speaker", "reply"};

struct ScoreGrids {
  int n = 0;
  // Per grid kind: (N*N) x labels, row i*N+j is cell (i, j).
  std::array<ad::Matrix, 3> logits;
  std::array<ad::Matrix, 3> probs;

  const ad::Matrix& logits_of(GridKind kind) const { return logits[static_cast<int>(kind)]; }
  const ad::Matrix& probs_of(GridKind kind) const { return probs[static_cast<int>(kind)]; }
  // Per-cell argmax label grid.
  LabelGrid Argmax() const;
};

// Creates tape leaves for parameters on first use.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, const ScorerParams& params, Gradients* grads);
  ad::Var operator()(std::string_view name);

 private:
  ad::Tape& tape_;
  const ScorerParams& params_;
  Gradients* grads_;
  std::vector<int> vars_;
};

// Dropout realization for one training forward pass.
struct DropoutSpec {
  double rate = 0.0;
  uint64_t seed = 0;
};

// Intermediate handles of one forward pass.
struct ForwardGraph {
  ad::Tape tape;
  ad::Var base;                      // N x d_model after the base encoder
  std::array<ad::Var, 3> views;      // thread, speaker, reply outputs
  ad::Var fused;                     // elementwise max of the views
  // Per grid kind: N x (labels * tag_dim) query and key projections.
  std::array<ad::Var, 3> queries;
  std::array<ad::Var, 3> keys;
  std::array<ad::Var, 3> logits;     // per grid kind: (N*N) x labels
  std::unique_ptr<ad::RotaryTable> rotary;
};

// Per-utterance base encoding, boundary sentinels added and then stripped,
// concatenated to N x d_model.
ad::Var EmbedDialogue(ad::Tape& tape, ParamBinder& bind, const DialogueInput& input,
                      const ModelConfig& config, const DropoutSpec* dropout);

// Three masked attention views pooled by elementwise maximum.
ad::Var MultiViewAttention(ad::Tape& tape, ParamBinder& bind, ad::Var h,
                           const MaskSet& masks, const ModelConfig& config,
                           std::array<ad::Var, 3>* views = nullptr);

// Query and key projections of tag_dim per label, stacked per grid kind.
// Separate sides let a cell score differ from its transpose.
struct TagProjections {
  std::array<ad::Var, 3> queries;
  std::array<ad::Var, 3> keys;
};
TagProjections TagProjection(ad::Tape& tape, ParamBinder& bind, ad::Var fused);

// Rotary unary scores per grid kind.
std::array<ad::Var, 3> ScoreCells(ad::Tape& tape, const TagProjections& projected,
                                  const ad::RotaryTable& rotary);

class Scorer {
 public:
  Scorer(ModelConfig config, ScorerParams params);

  const ModelConfig& config() const { return config_; }
  const ScorerParams& params() const { return params_; }
  ScorerParams& params() { return params_; }

  // Builds the whole graph. Gradients flow into `grads` when it is non-null
  // (it must come from params().ZeroGradients()).
  std::unique_ptr<ForwardGraph> Build(const DialogueInput& input, Gradients* grads,
                                       const DropoutSpec* dropout) const;
  // Inference: logits plus per-cell softmax, dropout disabled.
  ScoreGrids Forward(const DialogueInput& input) const;

 private:
  ModelConfig config_;
  ScorerParams params_;
};

ScoreGrids CollectGrids(const ForwardGraph& graph, int n);

}  // namespace diaasq

#endif  // DIAASQ_SCORER_H_
