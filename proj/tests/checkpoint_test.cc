#include <gtest/gtest.h>

#include "diaasq/checkpoint.h"
#include "diaasq/error.h"
#include "diaasq/train.h"
#include "support/paths.h"

namespace diaasq {
namespace {

ModelConfig Small() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.base_layers = 1;
  c.ffn_dim = 12;
  c.tag_dim = 4;
  return c;
}

class CheckpointTest : public ::testing::Test {
 protected:
  Corpus corpus = LoadCorpus(testing::DataPath("synthetic5.json"));
  Vocabulary vocab = Vocabulary::Build(corpus);
  testing::TempDir dir{"ckpt"};
};

TEST_F(CheckpointTest, ForwardSurvivesSaveAndLoad) {
  const ModelConfig config = Small();
  Checkpoint ck{config, vocab, ScorerParams::Init(config, vocab.size(), 9), {{"epoch", 3}}};
  SaveCheckpoint(dir.file("m.dqsk"), ck);
  const Checkpoint back = LoadCheckpoint(dir.file("m.dqsk"));
  EXPECT_EQ(back.config.ToJson(), config.ToJson());
  ASSERT_TRUE(back.vocabulary.has_value());
  EXPECT_EQ(back.vocabulary->ToJson(), vocab.ToJson());
  EXPECT_EQ(back.meta["epoch"], 3);

  const Scorer a(config, ck.params);
  const Scorer b(back.config, back.params);
  for (const Dialogue& d : corpus) {
    const ScoreGrids ga = a.Forward(PrepareInput(d, config, &vocab, nullptr));
    const ScoreGrids gb = b.Forward(PrepareInput(d, back.config, &*back.vocabulary, nullptr));
    for (int k = 0; k < 3; ++k) {
      EXPECT_LT((ga.logits[k] - gb.logits[k]).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST_F(CheckpointTest, ExternalModelHasNoVocabulary) {
  ModelConfig config = Small();
  config.embedding_source = EmbeddingSource::kExternal;
  SaveCheckpoint(dir.file("x.dqsk"), {config, std::nullopt, ScorerParams::Init(config, 0, 1), {}});
  const Checkpoint back = LoadCheckpoint(dir.file("x.dqsk"));
  EXPECT_FALSE(back.vocabulary.has_value());
  EXPECT_EQ(back.config.embedding_source, EmbeddingSource::kExternal);
}

TEST_F(CheckpointTest, CorruptFilesRejected) {
  const ModelConfig config = Small();
  SaveCheckpoint(dir.file("m.dqsk"), {config, vocab, ScorerParams::Init(config, vocab.size(), 9), {}});
  const std::string bytes = testing::ReadFile(dir.file("m.dqsk"));
  testing::WriteFile(dir.file("cut.dqsk"), bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(LoadCheckpoint(dir.file("cut.dqsk")), IoError);
  std::string magic = bytes;
  magic[1] = 'Z';
  testing::WriteFile(dir.file("magic.dqsk"), magic);
  EXPECT_THROW(LoadCheckpoint(dir.file("magic.dqsk")), IoError);
  EXPECT_THROW(LoadCheckpoint(dir.file("none.dqsk")), IoError);
}

TEST_F(CheckpointTest, MissingTensorIsShapeError) {
  const ModelConfig config = Small();
  ScorerParams full = ScorerParams::Init(config, vocab.size(), 9);
  ScorerParams partial;
  for (const NamedTensor& t : full.tensors()) {
    if (t.name != "tag.pol.key.bias") partial.Add(t.name, t.value, t.group, t.decay);
  }
  SaveCheckpoint(dir.file("p.dqsk"), {config, vocab, partial, {}});
  EXPECT_THROW(LoadCheckpoint(dir.file("p.dqsk")), ShapeError);

  ScorerParams reshaped = full;
  reshaped.Get("tag.pol.key.bias") = ad::Matrix::Zero(1, 3);
  SaveCheckpoint(dir.file("r.dqsk"), {config, vocab, reshaped, {}});
  EXPECT_THROW(LoadCheckpoint(dir.file("r.dqsk")), ShapeError);
}

TEST_F(CheckpointTest, TrainStateIsExact) {
  const ModelConfig config = Small();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  Trainer trainer(config, tc, ScorerParams::Init(config, vocab.size(), 9), vocab, nullptr);
  trainer.Run(corpus, {});
  const TrainState state = trainer.State();
  SaveTrainState(dir.file("s.dqst"), state);
  const TrainState back = LoadTrainState(dir.file("s.dqst"));
  EXPECT_EQ(back.step, state.step);
  EXPECT_EQ(back.epoch, 1);
  EXPECT_EQ(back.best_dev, state.best_dev);
  EXPECT_EQ(back.rng_state, state.rng_state);
  ASSERT_EQ(back.params.size(), state.params.size());
  for (int i = 0; i < state.params.size(); ++i) {
    EXPECT_EQ(back.params.tensors()[i].value, state.params.tensors()[i].value);
    EXPECT_EQ(back.adam_m[i], state.adam_m[i]);
    EXPECT_EQ(back.adam_v[i], state.adam_v[i]);
  }
  // A model checkpoint is not a training state.
  SaveCheckpoint(dir.file("m.dqsk"), {config, vocab, state.params, {}});
  EXPECT_THROW(LoadTrainState(dir.file("m.dqsk")), IoError);
}

}  // namespace
}  // namespace diaasq
