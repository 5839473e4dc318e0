#ifndef DIAASQ_CHECKPOINT_H_
#define DIAASQ_CHECKPOINT_H_

#include <optional>
#include <string>

#include "diaasq/corpus.h"
#include "diaasq/scorer.h"
#include "json.hpp"

namespace diaasq {

// Model checkpoint ("DQSK" container, integers u32 little-endian):
//   magic "DQSK" | version | config length | config JSON |
//   tensor count | per tensor: name length, name, rank, dims, f32 row-major values.
// The config JSON holds {"model": ..., "vocabulary": [...], "meta": {...}}.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  ModelConfig config;
  std::optional<Vocabulary> vocabulary;
  ScorerParams params;
  nlohmann::json meta = nlohmann::json::object();
};

void SaveCheckpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws IoError on a malformed container and ShapeError when tensor names or
// shapes disagree with the stored config.
Checkpoint LoadCheckpoint(const std::string& path);

// Full optimizer state for resuming training, stored as f64 so that a resumed
// run continues bit-identically ("DQST" container, same layout as DQSK with
// f64 values and extra tensors "adam.m/<name>", "adam.v/<name>").
struct TrainState {
  static constexpr uint32_t kVersion = 1;

  ModelConfig config;
  std::optional<Vocabulary> vocabulary;
  ScorerParams params;
  Gradients adam_m;
  Gradients adam_v;
  int64_t step = 0;
  int epoch = 0;  // completed epochs
  double best_dev = -1.0;
  std::string rng_state;
  nlohmann::json meta = nlohmann::json::object();
};

void SaveTrainState(const std::string& path, const TrainState& state);
TrainState LoadTrainState(const std::string& path);

}  // namespace diaasq

#endif  // DIAASQ_CHECKPOINT_H_
