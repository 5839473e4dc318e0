#ifndef DIAASQ_AUTOGRAD_H_
#define DIAASQ_AUTOGRAD_H_

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "diaasq/structure.h"

namespace diaasq::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

// cos/sin of the rotation applied between every token pair, indexed by the
// pairwise delta. Cell (i, j) of a score grid is q_i . R(-delta(i, j)) k_j,
// which equals R(P_i) q_i . R(P_j) k_j for the thread-pair positions P.
class RotaryTable {
 public:
  RotaryTable(const IntMatrix& delta, int dim, double base);

  int n() const { return n_; }
  int dim() const { return dim_; }
  // Pointers to dim/2 cosines and sines for cell (i, j).
  const double* cos(int i, int j) const { return &cos_[Offset(i, j)]; }
  const double* sin(int i, int j) const { return &sin_[Offset(i, j)]; }

 private:
  size_t Offset(int i, int j) const {
    return static_cast<size_t>(delta_(i, j) - min_delta_) * (dim_ / 2);
  }

  int n_;
  int dim_;
  int min_delta_ = 0;
  IntMatrix delta_;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

// Reverse-mode tape over dense row-major matrices. Nodes are appended in
// evaluation order; Backward walks them in reverse.
class Tape {
 public:
  Var Constant(Matrix value);
  // Leaf bound to external storage. When `grad` is non-null, gradients are
  // accumulated into it (it must already have the shape of `value`).
  Var Parameter(const Matrix& value, Matrix* grad);

  const Matrix& value(Var v) const;
  size_t size() const { return nodes_.size(); }

  // Seeds d(scalar)/d(scalar) = 1 and propagates to every parameter.
  void Backward(Var scalar);

  Var MatMul(Var a, Var b);
  Var Add(Var a, Var b);
  Var AddRow(Var x, Var row);  // broadcast a 1 x d row over x
  Var Scale(Var x, double factor);
  Var Gelu(Var x);
  Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var MulConstant(Var x, const Matrix& factor);  // elementwise
  Var Gather(Var table, std::span<const int> rows);
  Var SliceRows(Var x, int start, int count);
  Var ConcatRows(std::span<const Var> parts);
  // Elementwise maximum; ties go to the earliest input.
  Var Max(std::span<const Var> parts);
  // Multi-head scaled dot-product attention. Cells where `mask` is false are
  // excluded from the softmax (weight exactly zero). Throws ShapeError when a
  // row has no admissible cell.
  Var Attention(Var q, Var k, Var v, int heads, const BoolMatrix* mask);
  // q and k are N x (labels*dim); result is (N*N) x labels with row i*N+j
  // holding q_i . R(-delta_ij) k_j per label.
  Var RotaryScores(Var q, Var k, int labels, const RotaryTable& table);
  // -scale * sum_c weight[gold_c] * log softmax(logits_c)[gold_c], one row per cell.
  Var WeightedCrossEntropy(Var logits, std::span<const int> gold,
                           std::span<const double> weights, double scale);

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix* param_grad = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var Push(Matrix value, bool requires_grad, std::function<void()> backward);
  Node& node(Var v) { return nodes_[v.id]; }
  bool Requires(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of v, zero-allocated on first use.
  Matrix& Grad(Var v);

  std::deque<Node> nodes_;
};

}  // namespace diaasq::ad

#endif  // DIAASQ_AUTOGRAD_H_
