#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "diaasq/error.h"
#include "diaasq/structure.h"
#include "support/generators.h"
#include "support/paths.h"

namespace diaasq {
namespace {

using testing::MakeDialogue;

Dialogue TreeOf(const std::vector<int>& replies, const std::vector<int>& lengths,
                std::vector<int> speakers = {}) {
  std::vector<std::vector<std::string>> utts;
  for (int len : lengths) utts.emplace_back(len, "w");
  if (speakers.empty()) speakers.assign(replies.size(), 0);
  return MakeDialogue("t", utts, replies, speakers);
}

// Root-child ancestor of u (u itself when it hangs off the root), -1 for the root.
int BranchOf(const Dialogue& d, int u) {
  if (u == 0) return -1;
  while (d.utterances[u].reply_to != 0) u = d.utterances[u].reply_to;
  return u;
}

// Tokens of all strict ancestors, gathered by walking the path upwards.
int AncestorTokens(const Dialogue& d, int u) {
  int total = 0;
  for (int p = d.utterances[u].reply_to; p >= 0; p = d.utterances[p].reply_to) {
    total += d.utterances[p].size();
  }
  return total;
}

TEST(ThreadTest, ReferenceReplies) {
  const Dialogue d = TreeOf({-1, 0, 1, 2, 0, 4, 0, 6}, {2, 2, 2, 2, 2, 2, 2, 2});
  const ThreadAssignment t = AssignThreads(d);
  EXPECT_EQ(t.thread_of, (std::vector<int>{0, 1, 1, 1, 2, 2, 3, 3}));
  EXPECT_EQ(t.num_threads, 4);
}

TEST(ThreadTest, SingleUtterance) {
  EXPECT_EQ(AssignThreads(TreeOf({-1}, {3})).thread_of, (std::vector<int>{0}));
}

TEST(ThreadTest, Chain) {
  EXPECT_EQ(AssignThreads(TreeOf({-1, 0, 1, 2}, {1, 1, 1, 1})).thread_of,
            (std::vector<int>{0, 1, 1, 1}));
}

TEST(ThreadTest, MalformedTree) {
  EXPECT_THROW(AssignThreads(TreeOf({0, 0}, {1, 1})), DataError);
  EXPECT_THROW(AssignThreads(TreeOf({-1, -1}, {1, 1})), DataError);
  EXPECT_THROW(AssignThreads(TreeOf({-1, 2, 0}, {1, 1, 1})), DataError);
}

TEST(MaskTest, ReferenceSpeakersAndThreads) {
  const Dialogue d =
      TreeOf({-1, 0, 1, 2, 0, 4, 0, 6}, {2, 2, 2, 2, 2, 2, 2, 2}, {0, 1, 2, 1, 3, 0, 3, 0});
  const MaskSet m = BuildMasks(d, AssignThreads(d));
  const int u1 = d.utterances[1].begin, u3 = d.utterances[3].begin, u4 = d.utterances[4].begin;
  EXPECT_TRUE(m.speaker(u1, u3));
  EXPECT_FALSE(m.thread(u1, u4));
  EXPECT_TRUE(m.thread(0, u4));  // root tokens see every thread
  EXPECT_TRUE(m.reply(u1, 0));
  EXPECT_FALSE(m.reply(u1, u3));
}

TEST(MaskTest, SameUtteranceAllOnes) {
  const Dialogue d = TreeOf({-1, 0, 0}, {3, 4, 2}, {0, 1, 2});
  const MaskSet m = BuildMasks(d, AssignThreads(d));
  for (const Utterance& u : d.utterances) {
    for (int i = u.begin; i < u.end; ++i) {
      for (int j = u.begin; j < u.end; ++j) {
        EXPECT_TRUE(m.thread(i, j) && m.speaker(i, j) && m.reply(i, j));
      }
    }
  }
}

TEST(MaskTest, RandomTreesMatchDefinitions) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Dialogue d = testing::RandomDialogue(rng, {}, "r");
    const MaskSet m = BuildMasks(d, AssignThreads(d));
    const int n = d.num_tokens();
    for (int i = 0; i < n; ++i) {
      const int ui = d.UtteranceOf(i);
      for (int j = 0; j < n; ++j) {
        const int uj = d.UtteranceOf(j);
        const int bi = BranchOf(d, ui), bj = BranchOf(d, uj);
        EXPECT_EQ(m.thread(i, j), bi == bj || bi < 0 || bj < 0);
        EXPECT_EQ(m.speaker(i, j), d.utterances[ui].speaker == d.utterances[uj].speaker);
        EXPECT_EQ(m.reply(i, j), ui == uj || d.utterances[ui].reply_to == uj ||
                                     d.utterances[uj].reply_to == ui);
      }
    }
  }
}

TEST(PositionTest, Examples) {
  // root 5 tokens, child 4 tokens, grandchild in that branch.
  const Dialogue d = TreeOf({-1, 0, 1}, {5, 4, 3});
  const std::vector<int> p = LocalPositions(d);
  EXPECT_EQ(p[0], 0);
  EXPECT_EQ(p[5], 5);
  EXPECT_EQ(p[d.utterances[2].begin + 1], 10);
}

TEST(PositionTest, SiblingsRestartAfterParent) {
  const Dialogue d = TreeOf({-1, 0, 0}, {3, 4, 2});
  const std::vector<int> p = LocalPositions(d);
  EXPECT_EQ(p[d.utterances[2].begin], 3);
}

TEST(PositionTest, RandomTreesMatchPathWalk) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Dialogue d = testing::RandomDialogue(rng, {}, "r");
    const std::vector<int> p = LocalPositions(d);
    for (int t = 0; t < d.num_tokens(); ++t) {
      const Utterance& u = d.utterances[d.UtteranceOf(t)];
      EXPECT_EQ(p[t], AncestorTokens(d, u.index) + t - u.begin);
    }
  }
}

TEST(DeltaTest, Examples) {
  EXPECT_EQ(PairwiseDelta(1, 1, 3, 5), -2);
  EXPECT_EQ(PairwiseDelta(1, 2, 3, 5), -8);
  EXPECT_EQ(PairwiseDelta(2, 1, 5, 3), 8);
  EXPECT_EQ(PairwiseDelta(0, 2, 3, 5), -2);
}

TEST(DeltaTest, RandomTreesAntisymmetricAndSameThreadSubtraction) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Dialogue d = testing::RandomDialogue(rng, {}, "r");
    const DialogueStructure s = AnalyzeDialogue(d);
    const auto& delta = s.positions.delta;
    const auto& p = s.positions.local;
    for (int i = 0; i < d.num_tokens(); ++i) {
      EXPECT_EQ(delta(i, i), 0);
      for (int j = 0; j < d.num_tokens(); ++j) {
        EXPECT_EQ(delta(i, j), -delta(j, i));
        const int ti = s.token_thread[i], tj = s.token_thread[j];
        if (ti == tj || ti == 0 || tj == 0) {
          EXPECT_EQ(delta(i, j), p[i] - p[j]);
        } else {
          // Different non-root threads: the distance runs through the root.
          EXPECT_EQ(std::abs(delta(i, j)), p[i] + p[j]);
        }
      }
    }
  }
}

TEST(DumpTest, HasAllFields) {
  const nlohmann::json j = StructureToJson(AnalyzeDialogue(TreeOf({-1, 0}, {2, 1})));
  for (const char* key : {"threads", "local_positions", "mask_thread", "mask_speaker",
                          "mask_reply", "delta"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["delta"][0][2], -2);
}

TEST(RotaryTest, IdentityAtZero) {
  const RotaryMap map(8);
  const std::vector<double> v = {1, -2, 3, 0.5, 0, 7, -1, 2};
  EXPECT_EQ(map.Rotate(v, 0), v);
}

TEST(RotaryTest, SinglePlane) {
  const RotaryMap map(2, 10000.0);
  const std::vector<double> v = {1, 0};
  const auto r = map.Rotate(v, 1);
  EXPECT_DOUBLE_EQ(r[0], std::cos(1.0));
  EXPECT_DOUBLE_EQ(r[1], std::sin(1.0));
}

TEST(RotaryTest, OddDimensionRejected) {
  EXPECT_THROW(RotaryMap(3), ShapeError);
  const RotaryMap map(4);
  const std::vector<double> v = {1, 2};
  EXPECT_THROW(map.Rotate(v, 1), ShapeError);
}

TEST(RotaryTest, OrthonormalAndRelative) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> pos(-300, 300);
  const RotaryMap map(16);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = pos(rng), n = pos(rng);
    const Eigen::MatrixXd rm = map.Matrix(m), rn = map.Matrix(n);
    EXPECT_LT((rm.transpose() * rm - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(),
              1e-12);
    EXPECT_LT((rm.transpose() * rn - map.Matrix(n - m)).cwiseAbs().maxCoeff(), 1e-10);
    std::vector<double> v(16), w(16);
    for (double& x : v) x = g(rng);
    for (double& x : w) x = g(rng);
    const auto rv = map.Rotate(v, m), rw = map.Rotate(w, n), shifted = map.Rotate(w, n - m);
    double lhs = 0, rhs = 0, norm_v = 0, norm_rv = 0;
    for (int k = 0; k < 16; ++k) {
      lhs += rv[k] * rw[k];
      rhs += v[k] * shifted[k];
      norm_v += v[k] * v[k];
      norm_rv += rv[k] * rv[k];
    }
    EXPECT_NEAR(lhs, rhs, 1e-10);
    EXPECT_NEAR(norm_v, norm_rv, 1e-10);
    // Dense matrix agrees with the planar rotation.
    const Eigen::VectorXd dense = rm * Eigen::Map<const Eigen::VectorXd>(v.data(), 16);
    for (int k = 0; k < 16; ++k) EXPECT_NEAR(dense[k], rv[k], 1e-12);
  }
}

}  // namespace
}  // namespace diaasq
