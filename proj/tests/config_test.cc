#include <gtest/gtest.h>

#include "diaasq/config.h"
#include "diaasq/error.h"
#include "support/paths.h"

namespace diaasq {
namespace {

TEST(RunConfigTest, ParsesValuesCommentsAndLists) {
  const RunConfig c = RunConfig::Parse(R"(
# model
d_model = 64   # trailing comment
n_heads=2
alpha_ent = 1, 3, 3, 4
split_learning_rates = true
embedding_source = external
pair_mode = relaxed
train = data/train.json
)");
  EXPECT_EQ(c.model.d_model, 64);
  EXPECT_EQ(c.model.n_heads, 2);
  EXPECT_EQ(c.train.alpha_ent, (std::vector<double>{1, 3, 3, 4}));
  EXPECT_TRUE(c.train.split_learning_rates);
  EXPECT_EQ(c.model.embedding_source, EmbeddingSource::kExternal);
  EXPECT_EQ(c.train.decode.pair_mode, PairMode::kRelaxed);
  EXPECT_EQ(c.train_path, "data/train.json");
  EXPECT_EQ(c.model.tag_dim, ModelConfig{}.tag_dim);
}

TEST(RunConfigTest, SerializeRoundTrips) {
  RunConfig c;
  c.Set("lr_head", "0.0003");
  c.Set("rope_theta", "500");
  c.Set("seed", "123456789012");
  c.Set("dev", "some dir/dev.json");
  const std::string text = c.Serialize();
  const RunConfig back = RunConfig::Parse(text);
  EXPECT_EQ(back.Serialize(), text);
  EXPECT_EQ(back.train.lr_head, 0.0003);
  EXPECT_EQ(back.train.seed, 123456789012u);
  EXPECT_EQ(back.dev_path, "some dir/dev.json");
  for (const std::string& key : RunConfig::Keys()) EXPECT_EQ(back.Get(key), c.Get(key)) << key;
  EXPECT_EQ(back.ToJson(), c.ToJson());
}

TEST(RunConfigTest, ErrorsCarryLocation) {
  try {
    RunConfig::Parse("d_model = 8\n\nwidth = 3\n", "my.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("my.cfg:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("width"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::Parse("d_model = eight"), ConfigError);
  EXPECT_THROW(RunConfig::Parse("d_model = 8.5"), ConfigError);
  EXPECT_THROW(RunConfig::Parse("just text"), ConfigError);
  EXPECT_THROW(RunConfig::Parse("split_learning_rates = maybe"), ConfigError);
  EXPECT_THROW(RunConfig::Parse("alpha_pol = 1,,2,3"), ConfigError);
  EXPECT_THROW(RunConfig::Parse("pair_mode = loose"), ConfigError);
  EXPECT_THROW(RunConfig::Load("/nonexistent/run.cfg"), IoError);
}

TEST(RunConfigTest, ValidateChecksRanges) {
  RunConfig c = RunConfig::Parse("d_model = 10\nn_heads = 4\n");
  EXPECT_THROW(c.Validate(), ConfigError);
  c = RunConfig::Parse("alpha_pair = 1, 5\n");
  EXPECT_THROW(c.Validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.Validate());
}

TEST(RunConfigTest, LoadFromFile) {
  testing::TempDir dir("cfg");
  testing::WriteFile(dir.file("a.cfg"), "epochs = 3\nbatch_size = 2\n");
  const RunConfig c = RunConfig::Load(dir.file("a.cfg"));
  EXPECT_EQ(c.train.epochs, 3);
  EXPECT_EQ(c.train.batch_size, 2);
}

}  // namespace
}  // namespace diaasq
