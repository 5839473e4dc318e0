#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "diaasq/autograd.h"
#include "diaasq/error.h"
#include "diaasq/structure.h"
#include "support/gradcheck.h"

namespace diaasq::ad {
namespace {

using testing::CheckGraph;
using testing::RandomProjection;

constexpr double kTolerance = 1e-6;

Matrix Random(int rows, int cols, uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void ExpectGradients(std::vector<Matrix> inputs, const testing::GraphBuilder& build) {
  const testing::GradCheckResult r = CheckGraph(std::move(inputs), build);
  EXPECT_GT(r.checked, 0);
  EXPECT_LT(r.max_relative_error, kTolerance) << "worst at " << r.worst;
}

TEST(GradientTest, MatMulAddScale) {
  ExpectGradients({Random(3, 4, 1), Random(4, 2, 2), Random(3, 2, 3)},
                  [](Tape& t, const std::vector<Var>& x) {
                    Var y = t.Add(t.Scale(t.MatMul(x[0], x[1]), 0.7), x[2]);
                    return RandomProjection(t, y, 9);
                  });
}

TEST(GradientTest, AddRowAndMulConstant) {
  const Matrix factor = Random(3, 4, 4);
  ExpectGradients({Random(3, 4, 5), Random(1, 4, 6)}, [&](Tape& t, const std::vector<Var>& x) {
    return RandomProjection(t, t.MulConstant(t.AddRow(x[0], x[1]), factor), 10);
  });
}

TEST(GradientTest, Gelu) {
  ExpectGradients({Random(4, 5, 7, 2.0)}, [](Tape& t, const std::vector<Var>& x) {
    return RandomProjection(t, t.Gelu(x[0]), 11);
  });
}

TEST(GradientTest, LayerNorm) {
  ExpectGradients({Random(3, 6, 8), Random(1, 6, 9), Random(1, 6, 10)},
                  [](Tape& t, const std::vector<Var>& x) {
                    return RandomProjection(t, t.LayerNorm(x[0], x[1], x[2]), 12);
                  });
}

TEST(GradientTest, GatherSliceConcat) {
  const std::vector<int> rows = {2, 0, 2, 1};
  ExpectGradients({Random(3, 4, 13), Random(2, 4, 14)}, [&](Tape& t, const std::vector<Var>& x) {
    Var g = t.Gather(x[0], rows);
    const std::vector<Var> parts = {t.SliceRows(g, 1, 2), x[1], t.SliceRows(g, 0, 1)};
    return RandomProjection(t, t.ConcatRows(parts), 15);
  });
}

TEST(GradientTest, MaxRoutesToLargest) {
  ExpectGradients({Random(3, 4, 16), Random(3, 4, 17), Random(3, 4, 18)},
                  [](Tape& t, const std::vector<Var>& x) {
                    return RandomProjection(t, t.Max(x), 19);
                  });
}

TEST(GradientTest, MaskedAttention) {
  BoolMatrix mask(5, 5);
  mask.setConstant(false);
  for (int i = 0; i < 5; ++i) {
    mask(i, i) = true;
    mask(i, (i + 2) % 5) = true;
    mask(i, 0) = true;
  }
  ExpectGradients({Random(5, 4, 20), Random(5, 4, 21), Random(5, 4, 22)},
                  [&](Tape& t, const std::vector<Var>& x) {
                    return RandomProjection(t, t.Attention(x[0], x[1], x[2], 2, &mask), 23);
                  });
  ExpectGradients({Random(4, 6, 24), Random(4, 6, 25), Random(4, 6, 26)},
                  [](Tape& t, const std::vector<Var>& x) {
                    return RandomProjection(t, t.Attention(x[0], x[1], x[2], 3, nullptr), 27);
                  });
}

TEST(GradientTest, RotaryScores) {
  IntMatrix delta(4, 4);
  const std::vector<int> pos = {0, 1, -2, 3};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) delta(i, j) = pos[i] - pos[j];
  const RotaryTable table(delta, 4, 100.0);
  ExpectGradients({Random(4, 8, 28), Random(4, 8, 128)}, [&](Tape& t, const std::vector<Var>& x) {
    return RandomProjection(t, t.RotaryScores(x[0], x[1], 2, table), 29);
  });
  // Shared input on both sides.
  ExpectGradients({Random(4, 8, 30)}, [&](Tape& t, const std::vector<Var>& x) {
    return RandomProjection(t, t.RotaryScores(x[0], x[0], 2, table), 31);
  });
}

TEST(GradientTest, WeightedCrossEntropy) {
  const std::vector<int> gold = {0, 2, 1, 2, 0};
  const std::vector<double> weights = {1.0, 5.0, 3.0};
  ExpectGradients({Random(5, 3, 30)}, [&](Tape& t, const std::vector<Var>& x) {
    Var rows = t.WeightedCrossEntropy(x[0], gold, weights, 0.25);
    return RandomProjection(t, rows, 31);
  });
}

TEST(GradientTest, SharedSubexpressionAccumulates) {
  ExpectGradients({Random(3, 3, 32)}, [](Tape& t, const std::vector<Var>& x) {
    return RandomProjection(t, t.MatMul(x[0], t.Gelu(x[0])), 33);
  });
}

TEST(AttentionTest, MaskedKeysGetZeroWeight) {
  BoolMatrix mask(3, 3);
  mask << true, false, true,  //
      false, true, false,     //
      true, true, true;
  const Matrix q = Random(3, 4, 40);
  const Matrix k = Random(3, 4, 41);
  Matrix v = Random(3, 4, 42);
  Tape a;
  const Matrix before = a.value(a.Attention(a.Constant(q), a.Constant(k), a.Constant(v), 2, &mask));
  // Row 1 may only see key 1, so its output is exactly value row 1.
  EXPECT_EQ(before.row(1), v.row(1));
  v.row(1).setConstant(1e6);
  Tape b;
  const Matrix after = b.value(b.Attention(b.Constant(q), b.Constant(k), b.Constant(v), 2, &mask));
  EXPECT_EQ(after.row(0), before.row(0));
}

TEST(AttentionTest, EmptyMaskRowThrows) {
  BoolMatrix mask(2, 2);
  mask << true, true, false, false;
  Tape t;
  Var x = t.Constant(Random(2, 4, 43));
  EXPECT_THROW(t.Attention(x, x, x, 1, &mask), ShapeError);
}

TEST(TapeTest, ShapeErrors) {
  Tape t;
  Var a = t.Constant(Random(2, 3, 44));
  Var b = t.Constant(Random(2, 3, 45));
  EXPECT_THROW(t.MatMul(a, b), ShapeError);
  EXPECT_THROW(t.Backward(a), ShapeError);
  EXPECT_THROW(t.RotaryScores(a, b, 1, RotaryTable(IntMatrix::Zero(2, 2), 2, 10.0)), ShapeError);
  EXPECT_THROW(RotaryTable(IntMatrix::Zero(2, 2), 3, 10.0), ShapeError);
}

TEST(TapeTest, GradientsAccumulateIntoExternalBuffers) {
  const Matrix w = Random(2, 2, 46);
  Matrix grad = Matrix::Zero(2, 2);
  for (int pass = 0; pass < 2; ++pass) {
    Tape t;
    Var x = t.Parameter(w, &grad);
    t.Backward(RandomProjection(t, x, 47));
  }
  Matrix single = Matrix::Zero(2, 2);
  Tape t;
  t.Backward(RandomProjection(t, t.Parameter(w, &single), 47));
  EXPECT_TRUE(grad.isApprox(2.0 * single));
}

TEST(RotaryScoresTest, MatchesRotatedDotProduct) {
  const std::vector<int> pos = {0, 3, -1, 5, 2};
  IntMatrix delta(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) delta(i, j) = pos[i] - pos[j];
  const int dim = 6;
  const RotaryTable table(delta, dim, 50.0);
  const RotaryMap map(dim, 50.0);
  const Matrix x = Random(5, dim, 48);
  const Matrix y = Random(5, dim, 49);
  Tape t;
  const Matrix scores = t.value(t.RotaryScores(t.Constant(x), t.Constant(y), 1, table));
  for (int shift : {0, 7, -4}) {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        const std::vector<double> xi(x.row(i).data(), x.row(i).data() + dim);
        const std::vector<double> xj(y.row(j).data(), y.row(j).data() + dim);
        const auto ri = map.Rotate(xi, pos[i] + shift);
        const auto rj = map.Rotate(xj, pos[j] + shift);
        double dot = 0.0;
        for (int k = 0; k < dim; ++k) dot += ri[k] * rj[k];
        EXPECT_NEAR(scores(i * 5 + j, 0), dot, 1e-10) << "cell " << i << "," << j;
      }
    }
  }
}

}  // namespace
}  // namespace diaasq::ad
