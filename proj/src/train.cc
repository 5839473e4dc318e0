#include "diaasq/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "diaasq/error.h"

namespace diaasq {

using ad::Matrix;
using ad::Var;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::Validate() const {
  auto check_alpha = [](const std::vector<double>& a, size_t n, const char* name) {
    if (a.size() != n) {
      throw ConfigError(std::string(name) + " needs " + std::to_string(n) + " weights");
    }
    for (double w : a) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ConfigError(std::string(name) + " weights must be finite and >= 0");
      }
    }
  };
  check_alpha(alpha_ent, NumLabels(GridKind::kEnt), "alpha_ent");
  check_alpha(alpha_pair, NumLabels(GridKind::kPair), "alpha_pair");
  check_alpha(alpha_pol, NumLabels(GridKind::kPol), "alpha_pol");
  for (auto [v, name] : {std::pair{beta, "beta"}, {eta, "eta"}, {lr_head, "lr_head"},
                         {lr_encoder, "lr_encoder"}, {weight_decay, "weight_decay"}}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be >= 0");
  }
  if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

const std::vector<double>& TrainConfig::alpha(GridKind kind) const {
  switch (kind) {
    case GridKind::kEnt: return alpha_ent;
    case GridKind::kPair: return alpha_pair;
    case GridKind::kPol: break;
  }
  return alpha_pol;
}

json TrainConfig::ToJson() const {
  return {{"alpha_ent", alpha_ent},
          {"alpha_pair", alpha_pair},
          {"alpha_pol", alpha_pol},
          {"beta", beta},
          {"eta", eta},
          {"lr_head", lr_head},
          {"lr_encoder", lr_encoder},
          {"split_learning_rates", split_learning_rates},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_grad_norm", max_grad_norm},
          {"weight_decay", weight_decay},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"seed", seed},
          {"threads", threads},
          {"pair_mode", PairModeName(decode.pair_mode)}};
}

// ---------------------------------------------------------------------------
// Loss

namespace {

double Mix(const TrainConfig& c, double ent, double pair, double pol) {
  return ent + c.beta * pair + c.eta * pol;
}

void CheckSize(int n, const LabelGrid& gold) {
  if (gold.n != n) {
    throw ShapeError("gold grid has N=" + std::to_string(gold.n) + ", scores have N=" +
                     std::to_string(n));
  }
}

}  // namespace

LossNode AttachLoss(ForwardGraph& graph, const LabelGrid& gold, const TrainConfig& config,
                    double scale) {
  const int n = static_cast<int>(std::lround(std::sqrt(
      static_cast<double>(graph.tape.value(graph.logits[0]).rows()))));
  CheckSize(n, gold);
  const double inv = 1.0 / (static_cast<double>(n) * n);
  std::array<Var, 3> parts;
  std::array<double, 3> values{};
  for (GridKind kind : kGridKinds) {
    const int k = static_cast<int>(kind);
    const IntMatrix& y = gold.matrix(kind);
    parts[k] = graph.tape.WeightedCrossEntropy(
        graph.logits[k], std::span<const int>(y.data(), static_cast<size_t>(y.size())),
        config.alpha(kind), inv);
    values[k] = graph.tape.value(parts[k])(0, 0);
  }
  Var total = graph.tape.Add(parts[0], graph.tape.Add(graph.tape.Scale(parts[1], config.beta),
                                                      graph.tape.Scale(parts[2], config.eta)));
  if (scale != 1.0) total = graph.tape.Scale(total, scale);
  LossNode out;
  out.total = total;
  out.values = {Mix(config, values[0], values[1], values[2]), values[0], values[1], values[2]};
  return out;
}

LossBreakdown ComputeLoss(const ScoreGrids& grids, const LabelGrid& gold,
                          const TrainConfig& config) {
  CheckSize(grids.n, gold);
  const double inv = 1.0 / (static_cast<double>(grids.n) * grids.n);
  std::array<double, 3> values{};
  for (GridKind kind : kGridKinds) {
    const int k = static_cast<int>(kind);
    const Matrix& z = grids.logits_of(kind);
    const IntMatrix& y = gold.matrix(kind);
    const std::vector<double>& alpha = config.alpha(kind);
    double sum = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      const int label = y.data()[r];
      const double mx = z.row(r).maxCoeff();
      const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
      sum -= alpha[label] * (z(r, label) - lse);
    }
    values[k] = sum * inv;
  }
  return {Mix(config, values[0], values[1], values[2]), values[0], values[1], values[2]};
}

// ---------------------------------------------------------------------------
// Optimization

double ClipGradients(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Matrix& g : grads) g *= factor;
  }
  return norm;
}

AdamW::AdamW(const ScorerParams& params, const TrainConfig& config)
    : config_(config), m_(params.ZeroGradients()), v_(params.ZeroGradients()) {}

void AdamW::Restore(Gradients m, Gradients v, int64_t step) {
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw ShapeError("optimizer state does not match the parameter list");
  }
  m_ = std::move(m);
  v_ = std::move(v);
  step_ = step;
}

void AdamW::Step(ScorerParams& params, const Gradients& grads) {
  ++step_;
  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (int i = 0; i < params.size(); ++i) {
    NamedTensor& t = params.tensors()[i];
    const double lr = config_.split_learning_rates && t.group == ParamGroup::kEncoder
                          ? config_.lr_encoder
                          : config_.lr_head;
    m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseProduct(grads[i]);
    if (lr == 0.0) continue;
    if (t.decay && config_.weight_decay > 0.0) t.value *= 1.0 - lr * config_.weight_decay;
    t.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.adam_eps);
  }
}

// ---------------------------------------------------------------------------
// Inputs and prediction

DialogueInput PrepareInput(const Dialogue& dialogue, const ModelConfig& config,
                           const Vocabulary* vocab, const EmbeddingStore* store) {
  DialogueInput in;
  in.dialogue = &dialogue;
  in.structure = AnalyzeDialogue(dialogue);
  if (config.embedding_source == EmbeddingSource::kExternal) {
    if (store == nullptr) throw ConfigError("external embeddings selected but none supplied");
    if (store->dim() != config.d_model) {
      throw ConfigError("embedding file has dim " + std::to_string(store->dim()) +
                        " but d_model is " + std::to_string(config.d_model));
    }
    in.external = store->Find(dialogue.id);
    if (in.external == nullptr) {
      throw DataError(dialogue.id, "embeddings", "no embeddings for this dialogue");
    }
  } else {
    if (vocab == nullptr) throw ConfigError("trainable embeddings need a vocabulary");
    in.token_ids = vocab->Encode(dialogue);
  }
  return in;
}

std::vector<DialogueInput> PrepareInputs(const Corpus& corpus, const ModelConfig& config,
                                         const Vocabulary* vocab, const EmbeddingStore* store) {
  std::vector<DialogueInput> out;
  out.reserve(corpus.size());
  for (const Dialogue& d : corpus) out.push_back(PrepareInput(d, config, vocab, store));
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) over `threads` workers with a static split.
template <typename Fn>
void ParallelFor(int n, int threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Predictions Predict(const Scorer& scorer, const std::vector<DialogueInput>& inputs,
                    const DecodeConfig& decode, int threads) {
  Predictions out(inputs.size());
  ParallelFor(static_cast<int>(inputs.size()), threads, [&](int i) {
    const Dialogue& d = *inputs[i].dialogue;
    const Decoded decoded = Decode(scorer.Forward(inputs[i]).Argmax(), decode, &d);
    out[i] = {d.id, decoded.quads,
              std::array{decoded.targets, decoded.aspects, decoded.opinions}};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

json EpochRecord::ToJson() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"dev_micro_f1", dev_micro_f1},
          {"dev_iden_f1", dev_iden_f1}};
}

DivergenceError::DivergenceError(int epoch, int batch, double loss)
    : Error("non-finite loss " + std::to_string(loss) + " in epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

Trainer::Trainer(ModelConfig model, TrainConfig config, ScorerParams params,
                 std::optional<Vocabulary> vocab, const EmbeddingStore* store)
    : model_(model),
      config_(std::move(config)),
      scorer_(model, std::move(params)),
      vocab_(std::move(vocab)),
      store_(store),
      optimizer_(scorer_.params(), config_),
      rng_(config_.seed) {
  model_.Validate();
  config_.Validate();
}

Trainer Trainer::Resume(TrainState state, TrainConfig config, const EmbeddingStore* store) {
  Trainer t(state.config, std::move(config), std::move(state.params), std::move(state.vocabulary),
            store);
  t.optimizer_.Restore(std::move(state.adam_m), std::move(state.adam_v), state.step);
  std::istringstream rng_text(state.rng_state);
  rng_text >> t.rng_;
  if (!rng_text) throw IoError("training state holds an unreadable RNG state");
  t.epoch_ = state.epoch;
  t.best_dev_ = state.best_dev;
  return t;
}

TrainState Trainer::State() const {
  TrainState s;
  s.config = model_;
  s.vocabulary = vocab_;
  s.params = scorer_.params();
  s.adam_m = optimizer_.m();
  s.adam_v = optimizer_.v();
  s.step = optimizer_.step();
  s.epoch = epoch_;
  s.best_dev = best_dev_;
  std::ostringstream rng_text;
  rng_text << rng_;
  s.rng_state = rng_text.str();
  s.meta = {{"train", config_.ToJson()}};
  return s;
}

double Trainer::Step(const std::vector<const DialogueInput*>& batch,
                     const std::vector<const LabelGrid*>& gold, int epoch, int batch_index) {
  const int b = static_cast<int>(batch.size());
  if (b == 0) return 0.0;
  if (static_cast<int>(gold.size()) != b) throw ShapeError("one gold grid per dialogue expected");
  std::vector<DropoutSpec> dropout(b);
  for (int i = 0; i < b; ++i) dropout[i] = {model_.dropout, rng_()};

  std::vector<Gradients> grads(b);
  std::vector<double> losses(b, 0.0);
  ParallelFor(b, config_.threads, [&](int i) {
    grads[i] = scorer_.params().ZeroGradients();
    auto graph = scorer_.Build(*batch[i], &grads[i], &dropout[i]);
    LossNode loss = AttachLoss(*graph, *gold[i], config_, 1.0 / b);
    losses[i] = loss.values.total;
    graph->tape.Backward(loss.total);
  });

  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= b;
  if (!std::isfinite(mean)) throw DivergenceError(epoch, batch_index, mean);

  Gradients total = std::move(grads[0]);
  for (int i = 1; i < b; ++i) {
    for (size_t p = 0; p < total.size(); ++p) total[p] += grads[i][p];
  }
  ClipGradients(total, config_.max_grad_norm);
  optimizer_.Step(scorer_.params(), total);
  return mean;
}

TrainResult Trainer::Run(const Corpus& train, const Corpus& dev,
                         const TrainCallbacks& callbacks) {
  if (train.empty()) throw DataError("", "train", "training set is empty");
  const Vocabulary* vocab = vocab_ ? &*vocab_ : nullptr;
  const std::vector<DialogueInput> train_in = PrepareInputs(train, model_, vocab, store_);
  const std::vector<DialogueInput> dev_in = PrepareInputs(dev, model_, vocab, store_);
  std::vector<LabelGrid> gold;
  gold.reserve(train.size());
  for (const Dialogue& d : train) gold.push_back(Encode(d).grid);

  TrainResult result;
  result.best_dev = best_dev_;
  std::vector<int> order(train.size());
  while (epoch_ < config_.epochs) {
    const int epoch = epoch_ + 1;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    double loss_sum = 0.0;
    int batch_index = 0;
    for (size_t start = 0; start < order.size(); start += config_.batch_size, ++batch_index) {
      const size_t end = std::min(order.size(), start + config_.batch_size);
      std::vector<const DialogueInput*> batch;
      std::vector<const LabelGrid*> batch_gold;
      for (size_t k = start; k < end; ++k) {
        batch.push_back(&train_in[order[k]]);
        batch_gold.push_back(&gold[order[k]]);
      }
      loss_sum += Step(batch, batch_gold, epoch, batch_index) * static_cast<double>(end - start);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    if (!dev.empty()) {
      const QuadScores scores =
          QuadF1(Align(dev, Predict(scorer_, dev_in, config_.decode, config_.threads)));
      record.dev_micro_f1 = scores.micro.f1();
      record.dev_iden_f1 = scores.identification.f1();
    }
    epoch_ = epoch;
    result.history.push_back(record);

    // Without a dev set the latest epoch is kept.
    if (record.dev_micro_f1 > best_dev_ || dev.empty()) {
      best_dev_ = record.dev_micro_f1;
      result.best_dev = best_dev_;
      result.best_epoch = epoch;
      result.best_params = scorer_.params();
      if (callbacks.on_best) callbacks.on_best(record, scorer_.params());
    }
    if (callbacks.on_state) callbacks.on_state(State());
    if (callbacks.on_epoch && !callbacks.on_epoch(record, scorer_)) break;
  }
  return result;
}

}  // namespace diaasq
