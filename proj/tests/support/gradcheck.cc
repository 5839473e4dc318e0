#include "support/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "diaasq/codec.h"

namespace diaasq::testing {

using ad::Matrix;
using ad::Var;

double RelativeError(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

Var RandomProjection(ad::Tape& tape, Var x, uint64_t seed) {
  const Matrix& v = tape.value(x);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix left(1, v.rows());
  Matrix right(v.cols(), 1);
  for (Eigen::Index i = 0; i < left.size(); ++i) left.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < right.size(); ++i) right.data()[i] = u(rng);
  return tape.MatMul(tape.MatMul(tape.Constant(left), x), tape.Constant(right));
}

namespace {

void Record(GradCheckResult& result, double analytic, double numeric, const std::string& where) {
  const double err = RelativeError(analytic, numeric);
  ++result.checked;
  if (result.worst.empty() || err > result.max_relative_error) {
    result.max_relative_error = err;
    result.worst = where;
  }
}

double Evaluate(const std::vector<Matrix>& inputs, const GraphBuilder& build) {
  ad::Tape tape;
  std::vector<Var> leaves;
  for (const Matrix& m : inputs) leaves.push_back(tape.Parameter(m, nullptr));
  return tape.value(build(tape, leaves))(0, 0);
}

// Five-point central difference of f at the current value of *x.
double Derivative(double* x, double step, const std::function<double()>& f) {
  const double keep = *x;
  double samples[4];
  const double offsets[4] = {2 * step, step, -step, -2 * step};
  for (int k = 0; k < 4; ++k) {
    *x = keep + offsets[k];
    samples[k] = f();
  }
  *x = keep;
  return (-samples[0] + 8 * samples[1] - 8 * samples[2] + samples[3]) / (12 * step);
}

std::vector<Eigen::Index> Probe(Eigen::Index size, int per_tensor, std::mt19937_64& rng) {
  std::vector<Eigen::Index> all(size);
  for (Eigen::Index i = 0; i < size; ++i) all[i] = i;
  if (per_tensor > 0 && size > per_tensor) {
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(per_tensor);
  }
  return all;
}

}  // namespace

GradCheckResult CheckGraph(std::vector<Matrix> inputs, const GraphBuilder& build, double step) {
  std::vector<Matrix> grads;
  for (const Matrix& m : inputs) grads.push_back(Matrix::Zero(m.rows(), m.cols()));
  {
    ad::Tape tape;
    std::vector<Var> leaves;
    for (size_t i = 0; i < inputs.size(); ++i) {
      leaves.push_back(tape.Parameter(inputs[i], &grads[i]));
    }
    tape.Backward(build(tape, leaves));
  }
  GradCheckResult result;
  for (size_t t = 0; t < inputs.size(); ++t) {
    for (Eigen::Index e = 0; e < inputs[t].size(); ++e) {
      const double numeric =
          Derivative(&inputs[t].data()[e], step, [&] { return Evaluate(inputs, build); });
      Record(result, grads[t].data()[e], numeric,
             "input" + std::to_string(t) + "[" + std::to_string(e) + "]");
    }
  }
  return result;
}

GradCheckResult CheckScorerLoss(const ModelConfig& model, const TrainConfig& train,
                                const Dialogue& dialogue, uint64_t seed, int per_tensor,
                                double step) {
  const Vocabulary vocab = Vocabulary::Build({dialogue});
  Scorer scorer(model, ScorerParams::Init(model, vocab.size(), seed));
  const DialogueInput input = PrepareInput(dialogue, model, &vocab, nullptr);
  const LabelGrid gold = Encode(dialogue).grid;

  Gradients grads = scorer.params().ZeroGradients();
  {
    auto graph = scorer.Build(input, &grads, nullptr);
    const LossNode loss = AttachLoss(*graph, gold, train);
    graph->tape.Backward(loss.total);
  }

  std::mt19937_64 rng(seed ^ 0x5eedULL);
  GradCheckResult result;
  auto& tensors = scorer.params().tensors();
  for (size_t t = 0; t < tensors.size(); ++t) {
    Matrix& value = tensors[t].value;
    for (Eigen::Index e : Probe(value.size(), per_tensor, rng)) {
      const double numeric = Derivative(&value.data()[e], step, [&] {
        return ComputeLoss(scorer.Forward(input), gold, train).total;
      });
      Record(result, grads[t].data()[e], numeric,
             tensors[t].name + "[" + std::to_string(e) + "]");
    }
  }
  return result;
}

}  // namespace diaasq::testing
