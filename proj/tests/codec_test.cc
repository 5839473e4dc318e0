#include <algorithm>
#include <random>
#include <tuple>

#include <gtest/gtest.h>

#include "diaasq/codec.h"
#include "diaasq/error.h"
#include "support/generators.h"
#include "support/paths.h"

namespace diaasq {
namespace {

using testing::KeySet;
using testing::MakeDialogue;
using testing::QuadSpec;

const DecodeConfig kStrict{PairMode::kStrict};
const DecodeConfig kRelaxed{PairMode::kRelaxed};

Dialogue Reference() { return LoadCorpus(testing::DataPath("phone_review.json"))[0]; }

TEST(EncodeTest, ReferenceQuadCells) {
  const LabelGrid g = Encode(Reference()).grid;
  EXPECT_EQ(g.ent(20, 20), kEntTgt);
  EXPECT_EQ(g.ent(24, 24), kEntAsp);
  EXPECT_EQ(g.ent(17, 17), kEntOpi);
  EXPECT_EQ(g.pair(20, 24), kPairH2H);
  EXPECT_EQ(g.pair(20, 17), kPairH2H);
  EXPECT_EQ(g.pair(24, 17), kPairH2H);
  EXPECT_EQ(g.pol(20, 17), kPolPos);
}

TEST(EncodeTest, MultiTokenSpansUseHeadAndTailCells) {
  const Dialogue d = MakeDialogue("m", {{"a", "b", "c", "d", "e", "f"}}, {-1}, {0},
                                  {{0, 2, 2, 4, 4, 6, Polarity::kNeg}});
  const LabelGrid g = Encode(d).grid;
  EXPECT_EQ(g.ent(0, 1), kEntTgt);
  EXPECT_EQ(g.ent(2, 3), kEntAsp);
  EXPECT_EQ(g.ent(4, 5), kEntOpi);
  EXPECT_EQ(g.pair(0, 2), kPairH2H);
  EXPECT_EQ(g.pair(1, 3), kPairT2T);
  EXPECT_EQ(g.pair(0, 4), kPairH2H);
  EXPECT_EQ(g.pair(1, 5), kPairT2T);
  EXPECT_EQ(g.pair(2, 4), kPairH2H);
  EXPECT_EQ(g.pair(3, 5), kPairT2T);
  EXPECT_EQ(g.pol(0, 4), kPolNeg);
  EXPECT_EQ(g.pol(1, 5), kPolNeg);
  int nonzero = 0;
  for (GridKind k : kGridKinds) nonzero += (g.matrix(k).array() != 0).count();
  EXPECT_EQ(nonzero, 3 + 6 + 2);
}

TEST(EncodeTest, EmptyQuadSetGivesAllEps) {
  const Dialogue d = MakeDialogue("e", {{"a", "b"}, {"c"}}, {-1, 0}, {0, 1});
  const LabelGrid g = Encode(d).grid;
  for (GridKind k : kGridKinds) EXPECT_EQ((g.matrix(k).array() != 0).count(), 0);
}

TEST(EncodeTest, SharedTargetOpinionDifferentPolarityKeepsFirst) {
  const Dialogue d = MakeDialogue("c", {{"t", "a1", "a2", "o"}}, {-1}, {0},
                                  {{0, 1, 1, 2, 3, 4, Polarity::kPos},
                                   {0, 1, 2, 3, 3, 4, Polarity::kNeg}});
  const EncodeResult r = Encode(d);
  ASSERT_EQ(r.conflicts.size(), 1u);
  EXPECT_EQ(r.conflicts[0].grid, GridKind::kPol);
  EXPECT_EQ(r.conflicts[0].kept, kPolPos);
  EXPECT_EQ(r.conflicts[0].rejected, kPolNeg);
  EXPECT_EQ(r.grid.pol(0, 3), kPolPos);
}

TEST(EncodeTest, SpanOutsideGridThrows) {
  Dialogue d = MakeDialogue("o", {{"a", "b"}}, {-1}, {0});
  d.targets.push_back(Span{1, 5, SpanKind::kTarget, ""});
  EXPECT_THROW(Encode(d), ShapeError);
}

TEST(DecodeTest, ReferenceDialogueRoundTrips) {
  const Dialogue d = Reference();
  const Decoded out = Decode(Encode(d).grid, kStrict, &d);
  EXPECT_EQ(KeySet(out.quads), KeySet(d.quads));
  EXPECT_EQ(out.quads.size(), 11u);
  EXPECT_EQ(out.quads[0].target.text, "iPhone");
}

TEST(DecodeTest, HeadLinksWithoutTailLinksGiveNothing) {
  const Dialogue d = MakeDialogue("m", {{"a", "b", "c", "d", "e", "f"}}, {-1}, {0},
                                  {{0, 2, 2, 4, 4, 6, Polarity::kNeg}});
  LabelGrid g = Encode(d).grid;
  g.pair = g.pair.unaryExpr([](int v) { return v == kPairT2T ? 0 : v; });
  EXPECT_TRUE(Decode(g, kStrict).quads.empty());
  EXPECT_TRUE(Decode(g, kRelaxed).quads.empty());
  EXPECT_EQ(Decode(g, kStrict).targets.size(), 1u);
}

TEST(DecodeTest, PolarityFallsBackToTailCellAndHeadWins) {
  const Dialogue d = MakeDialogue("m", {{"a", "b", "c", "d", "e", "f"}}, {-1}, {0},
                                  {{0, 2, 2, 4, 4, 6, Polarity::kNeg}});
  LabelGrid g = Encode(d).grid;
  g.pol(0, 4) = kPolEps;
  ASSERT_EQ(Decode(g, kStrict).quads.size(), 1u);
  EXPECT_EQ(Decode(g, kStrict).quads[0].polarity, Polarity::kNeg);
  g.pol(0, 4) = kPolOther;
  EXPECT_EQ(Decode(g, kStrict).quads[0].polarity, Polarity::kOther);
  g.pol(0, 4) = kPolEps;
  g.pol(1, 5) = kPolEps;
  EXPECT_TRUE(Decode(g, kStrict).quads.empty());
}

TEST(DecodeTest, LowerTriangleEntityCellsIgnored) {
  LabelGrid g = LabelGrid::Empty(4);
  g.ent(3, 1) = kEntTgt;
  EXPECT_TRUE(Decode(g, kStrict).targets.empty());
}

// Every (t, a, o) combination of decoded spans with all three links present.
std::set<std::tuple<std::pair<int, int>, std::pair<int, int>, std::pair<int, int>>> Candidates(
    const LabelGrid& g, const Decoded& spans) {
  auto linked = [&](const Span& x, const Span& y) {
    if (x.start == x.end - 1 && y.start == y.end - 1) return g.pair(x.head(), y.head()) == kPairH2H;
    return g.pair(x.head(), y.head()) == kPairH2H && g.pair(x.tail(), y.tail()) == kPairT2T;
  };
  std::set<std::tuple<std::pair<int, int>, std::pair<int, int>, std::pair<int, int>>> out;
  for (const Span& t : spans.targets) {
    for (const Span& a : spans.aspects) {
      for (const Span& o : spans.opinions) {
        if (linked(t, a) && linked(t, o) && linked(a, o)) out.insert({t.range(), a.range(), o.range()});
      }
    }
  }
  return out;
}

TEST(DecodeTest, SharedTargetNoSpuriousThird) {
  const Dialogue d = MakeDialogue("s", {{"T", "a1", "o1"}, {"a2", "x", "o2"}}, {-1, 0}, {0, 1},
                                  {{0, 1, 1, 2, 2, 3, Polarity::kPos},
                                   {0, 1, 3, 4, 5, 6, Polarity::kNeg}});
  const LabelGrid g = Encode(d).grid;
  const Decoded out = Decode(g, kStrict);
  EXPECT_EQ(KeySet(out.quads), KeySet(d.quads));
  EXPECT_EQ(Candidates(g, out).size(), 2u);
  // Relaxed mode adds the two cross combinations.
  EXPECT_EQ(Decode(g, kRelaxed).quads.size(), 4u);
}

TEST(PropertyTest, ConflictFreeRoundTrip) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const Dialogue d = testing::RandomConflictFree(rng, {}, std::to_string(i));
    const EncodeResult enc = Encode(d);
    EXPECT_TRUE(enc.conflicts.empty());
    EXPECT_EQ(KeySet(Decode(enc.grid, kStrict).quads), KeySet(d.quads)) << "dialogue " << i;
  }
}

TEST(PropertyTest, OrderInsensitiveForConflictFree) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 100; ++i) {
    Dialogue d = testing::RandomConflictFree(rng, {}, "p");
    const LabelGrid a = Encode(d).grid;
    std::shuffle(d.quads.begin(), d.quads.end(), rng);
    const LabelGrid b = Encode(d).grid;
    for (GridKind k : kGridKinds) EXPECT_EQ(a.matrix(k), b.matrix(k));
  }
}

TEST(PropertyTest, StrictSubsetOfRelaxedAndUpperTriangle) {
  std::mt19937_64 rng(23);
  testing::GenOptions opts;
  opts.reuse = 0.7;
  for (int i = 0; i < 200; ++i) {
    const Dialogue d = testing::RandomAnnotated(rng, opts, "p");
    const LabelGrid g = Encode(d).grid;
    const auto strict = KeySet(Decode(g, kStrict).quads);
    const auto relaxed = KeySet(Decode(g, kRelaxed).quads);
    EXPECT_TRUE(std::includes(relaxed.begin(), relaxed.end(), strict.begin(), strict.end()));
    for (int r = 0; r < g.n; ++r) {
      for (int c = 0; c < r; ++c) EXPECT_EQ(g.ent(r, c), kEntEps);
    }
  }
}

// Two quadruples where the elements named in `shared` are identical.
struct OverlapCase {
  std::string name;
  bool share_t, share_a, share_o;
};

class OverlapTest : public ::testing::TestWithParam<std::tuple<OverlapCase, bool, bool>> {};

TEST_P(OverlapTest, RecoveryMatchesConflictRule) {
  const auto& [c, same_polarity, multi_token] = GetParam();
  // Utterances: targets, aspects, opinions. Each holds a two-token and a one-token span.
  const int w = multi_token ? 2 : 1;
  const QuadSpec first{0, w, 4, 4 + w, 8, 8 + w, Polarity::kPos};
  const QuadSpec second{c.share_t ? 0 : 3, c.share_t ? w : 4, c.share_a ? 4 : 7, c.share_a ? 4 + w : 8,
                        c.share_o ? 8 : 11, c.share_o ? 8 + w : 12,
                        same_polarity ? Polarity::kPos : Polarity::kNeg};
  std::vector<std::vector<std::string>> utts = {{"Mate", "40", "and", "Pixel"},
                                                {"battery", "life", "and", "screen"},
                                                {"very", "good", "but", "dim"}};
  const Dialogue d = MakeDialogue("ov", utts, {-1, 0, 1}, {0, 1, 0}, {first, second});

  const bool polarity_clash = c.share_t && c.share_o && !same_polarity;
  const FidelityReport report = RoundtripReport({d}, kStrict);
  EXPECT_EQ(report.gold, 2);
  EXPECT_EQ(report.unexplained_misses, 0);
  if (polarity_clash) {
    EXPECT_EQ(report.recovered, 1);
    EXPECT_EQ(report.conflicts, multi_token ? 2 : 1);
    EXPECT_LT(report.recall(), 1.0);
  } else {
    EXPECT_EQ(report.recovered, 2);
    EXPECT_EQ(report.conflicts, 0);
    EXPECT_EQ(report.precision(), 1.0);
  }
}

std::string OverlapName(const ::testing::TestParamInfo<OverlapTest::ParamType>& info) {
  const auto& [c, same, multi] = info.param;
  return c.name + (same ? "_same_polarity" : "_different_polarity") +
         (multi ? "_multi_token" : "_single_token");
}

INSTANTIATE_TEST_SUITE_P(
    SharedElements, OverlapTest,
    ::testing::Combine(::testing::Values(OverlapCase{"target", true, false, false},
                                         OverlapCase{"aspect", false, true, false},
                                         OverlapCase{"opinion", false, false, true},
                                         OverlapCase{"target_aspect", true, true, false},
                                         OverlapCase{"target_opinion", true, false, true},
                                         OverlapCase{"aspect_opinion", false, true, true}),
                       ::testing::Bool(), ::testing::Bool()),
    OverlapName);

// The same triple annotated twice with different polarities.
INSTANTIATE_TEST_SUITE_P(
    SameTriple, OverlapTest,
    ::testing::Combine(::testing::Values(OverlapCase{"all_three", true, true, true}),
                       ::testing::Values(false), ::testing::Bool()),
    OverlapName);

TEST(RoundtripReportTest, ConflictFreeFixturesAreExact) {
  for (const char* name : {"phone_review.json", "synthetic5.json"}) {
    const FidelityReport r = RoundtripReport(LoadCorpus(testing::DataPath(name)), kStrict);
    EXPECT_EQ(r.recall(), 1.0) << name;
    EXPECT_EQ(r.precision(), 1.0) << name;
    EXPECT_EQ(r.conflicts, 0) << name;
  }
}

TEST(GridJsonTest, RoundTrip) {
  const LabelGrid g = Encode(Reference()).grid;
  const LabelGrid back = GridFromJson(GridToJson(g));
  ASSERT_EQ(back.n, g.n);
  for (GridKind k : kGridKinds) EXPECT_EQ(back.matrix(k), g.matrix(k));
  const nlohmann::json j = GridToJson(g);
  EXPECT_EQ(j["n"], 250);
  EXPECT_EQ(j["ent"][0].size(), 3u);
}

TEST(PairModeTest, Parse) {
  EXPECT_EQ(ParsePairMode("strict"), PairMode::kStrict);
  EXPECT_EQ(ParsePairMode("relaxed"), PairMode::kRelaxed);
  EXPECT_THROW(ParsePairMode("loose"), ConfigError);
}

}  // namespace
}  // namespace diaasq
