#ifndef DIAASQ_STRUCTURE_H_
#define DIAASQ_STRUCTURE_H_

#include <span>
#include <vector>

#include <Eigen/Core>

#include "diaasq/corpus.h"
#include "json.hpp"

namespace diaasq {

using BoolMatrix =
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntMatrix =
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Thread 0 is the root utterance; thread k >= 1 is the subtree under the k-th
// child of the root, children ordered by utterance index.
struct ThreadAssignment {
  std::vector<int> thread_of;  // per utterance
  int num_threads = 0;         // including thread 0
};

// Throws DataError when the reply links do not form a single tree rooted at
// utterance 0.
ThreadAssignment AssignThreads(const Dialogue& dialogue);

// Token-level interaction masks, N x N.
struct MaskSet {
  BoolMatrix thread;
  BoolMatrix speaker;
  BoolMatrix reply;
};

MaskSet BuildMasks(const Dialogue& dialogue, const ThreadAssignment& threads);

// Distance of every token from the first token of the root utterance along
// the root-to-owner reply path.
std::vector<int> LocalPositions(const Dialogue& dialogue);

// Position of a token (thread `own_thread`, local position `local`) when it is
// scored against a token of thread `other_thread`.
int ThreadPairPosition(int own_thread, int other_thread, int local);

// Signed relative distance between tokens i and j given their threads and
// local positions.
int PairwiseDelta(int thread_i, int thread_j, int local_i, int local_j);

struct PositionTable {
  std::vector<int> local;  // per token
  IntMatrix delta;         // N x N
};

PositionTable BuildPositions(const Dialogue& dialogue,
                             const ThreadAssignment& threads);

// Everything the scorer needs about the reply tree of one dialogue.
struct DialogueStructure {
  ThreadAssignment threads;
  std::vector<int> token_thread;  // per token
  MaskSet masks;
  PositionTable positions;
};

DialogueStructure AnalyzeDialogue(const Dialogue& dialogue);

// Debug dump with threads, local positions, masks and the delta matrix.
nlohmann::json StructureToJson(const DialogueStructure& structure);

// Rotary position map: dim/2 planar rotations of consecutive coordinate
// pairs, pair k turning by m * base^(-2k/dim) at position m.
class RotaryMap {
 public:
  // Throws ShapeError for an odd or non-positive dimension.
  explicit RotaryMap(int dim, double base = 10000.0);

  int dim() const { return dim_; }
  double base() const { return base_; }
  double Frequency(int k) const { return freqs_[k]; }

  std::vector<double> Rotate(std::span<const double> v, double position) const;
  // Dense dim x dim rotation matrix.
  Eigen::MatrixXd Matrix(double position) const;

 private:
  int dim_;
  double base_;
  std::vector<double> freqs_;
};

}  // namespace diaasq

#endif  // DIAASQ_STRUCTURE_H_
