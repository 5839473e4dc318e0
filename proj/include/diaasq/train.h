#ifndef DIAASQ_TRAIN_H_
#define DIAASQ_TRAIN_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "diaasq/checkpoint.h"
#include "diaasq/codec.h"
#include "diaasq/corpus.h"
#include "diaasq/embeddings.h"
#include "diaasq/eval.h"
#include "diaasq/scorer.h"
#include "json.hpp"

namespace diaasq {

struct TrainConfig {
  // Per-label loss weights, index 0 being the null label.
  std::vector<double> alpha_ent = {1, 5, 5, 5};
  std::vector<double> alpha_pair = {1, 5, 5};
  std::vector<double> alpha_pol = {1, 5, 5, 5};
  double beta = 0.5;  // pair loss weight
  double eta = 0.5;   // polarity loss weight
  double lr_head = 1e-3;
  double lr_encoder = 1e-5;
  // When false every tensor uses lr_head. The encoder rate only makes sense
  // for a pretrained encoder, which this model does not have.
  bool split_learning_rates = false;
  int batch_size = 4;
  int epochs = 20;
  double max_grad_norm = 1.0;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 1;
  int threads = 1;
  DecodeConfig decode;

  void Validate() const;  // ConfigError
  const std::vector<double>& alpha(GridKind kind) const;
  nlohmann::json ToJson() const;
};

struct LossBreakdown {
  double total = 0.0;
  double ent = 0.0;
  double pair = 0.0;
  double pol = 0.0;
};

// Appends the weighted loss of one dialogue to the graph's tape. `scale`
// multiplies the total (1 / batch size during training).
struct LossNode {
  ad::Var total;
  LossBreakdown values;  // unscaled
};
LossNode AttachLoss(ForwardGraph& graph, const LabelGrid& gold, const TrainConfig& config,
                    double scale = 1.0);

// Same quantity computed directly from score grids.
LossBreakdown ComputeLoss(const ScoreGrids& grids, const LabelGrid& gold,
                          const TrainConfig& config);

// Rescales all gradients in place when their global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double ClipGradients(Gradients& grads, double max_norm);

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ScorerParams& params, const TrainConfig& config);

  void Step(ScorerParams& params, const Gradients& grads);

  int64_t step() const { return step_; }
  const Gradients& m() const { return m_; }
  const Gradients& v() const { return v_; }
  void Restore(Gradients m, Gradients v, int64_t step);

 private:
  TrainConfig config_;
  Gradients m_;
  Gradients v_;
  int64_t step_ = 0;
};

// Builds the model input for one dialogue. Exactly one of `vocab` and
// `store` is used depending on the embedding source.
DialogueInput PrepareInput(const Dialogue& dialogue, const ModelConfig& config,
                           const Vocabulary* vocab, const EmbeddingStore* store);

std::vector<DialogueInput> PrepareInputs(const Corpus& corpus, const ModelConfig& config,
                                         const Vocabulary* vocab, const EmbeddingStore* store);

// Argmax grids decoded into quadruples and spans, one entry per dialogue.
Predictions Predict(const Scorer& scorer, const std::vector<DialogueInput>& inputs,
                    const DecodeConfig& decode, int threads = 1);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_micro_f1 = 0.0;
  double dev_iden_f1 = 0.0;

  nlohmann::json ToJson() const;
};

// Raised when a batch produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, int batch, double loss);
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

struct TrainCallbacks {
  // Called after every epoch; returning false stops training.
  std::function<bool(const EpochRecord&, const Scorer&)> on_epoch;
  // Called when the dev score improves on the best so far.
  std::function<void(const EpochRecord&, const ScorerParams&)> on_best;
  // Called after every epoch with the resumable state.
  std::function<void(const TrainState&)> on_state;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_dev = -1.0;
  int best_epoch = 0;
  std::optional<ScorerParams> best_params;  // set when a new best occurred in this run
};

class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig config, ScorerParams params,
          std::optional<Vocabulary> vocab, const EmbeddingStore* store);
  // Continues from a saved state; the vocabulary and model config come from it.
  static Trainer Resume(TrainState state, TrainConfig config, const EmbeddingStore* store);

  const Scorer& scorer() const { return scorer_; }
  const TrainConfig& config() const { return config_; }
  const std::optional<Vocabulary>& vocabulary() const { return vocab_; }
  int completed_epochs() const { return epoch_; }

  // One optimizer update on the given dialogues. Returns the mean per-dialogue
  // loss before the update.
  double Step(const std::vector<const DialogueInput*>& batch,
              const std::vector<const LabelGrid*>& gold, int epoch, int batch_index);

  // Runs until config.epochs epochs are complete (counting resumed ones).
  TrainResult Run(const Corpus& train, const Corpus& dev, const TrainCallbacks& callbacks = {});

  TrainState State() const;

 private:
  ModelConfig model_;
  TrainConfig config_;
  Scorer scorer_;
  std::optional<Vocabulary> vocab_;
  const EmbeddingStore* store_;
  AdamW optimizer_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  double best_dev_ = -1.0;
};

}  // namespace diaasq

#endif  // DIAASQ_TRAIN_H_
