#include "diaasq/structure.h"

#include <cmath>

#include "diaasq/error.h"

namespace diaasq {

ThreadAssignment AssignThreads(const Dialogue& d) {
  ThreadAssignment out;
  const int n = d.num_utterances();
  if (n == 0) throw DataError(d.id, "/sentences", "malformed tree: no utterances");
  out.thread_of.assign(n, -1);
  if (d.utterances[0].reply_to != -1) {
    throw DataError(d.id, "/replies/0", "malformed tree: utterance 0 must be the root");
  }
  out.thread_of[0] = 0;
  int next_thread = 1;
  for (int u = 1; u < n; ++u) {
    const int parent = d.utterances[u].reply_to;
    if (parent < 0 || parent >= u) {
      throw DataError(d.id, "/replies/" + std::to_string(u),
                      "malformed tree: utterance " + std::to_string(u) +
                          " has reply target " + std::to_string(parent));
    }
    // Parents precede children, so the parent's thread is already known.
    out.thread_of[u] = parent == 0 ? next_thread++ : out.thread_of[parent];
  }
  out.num_threads = next_thread;
  return out;
}

MaskSet BuildMasks(const Dialogue& d, const ThreadAssignment& threads) {
  const int n = d.num_tokens();
  MaskSet m;
  m.thread.resize(n, n);
  m.speaker.resize(n, n);
  m.reply.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const Utterance& ui = d.utterances[d.UtteranceOf(i)];
    const int ti = threads.thread_of[ui.index];
    for (int j = 0; j < n; ++j) {
      const Utterance& uj = d.utterances[d.UtteranceOf(j)];
      const int tj = threads.thread_of[uj.index];
      m.thread(i, j) = ti == tj || ti == 0 || tj == 0;
      m.speaker(i, j) = ui.speaker == uj.speaker;
      m.reply(i, j) = ui.index == uj.index || ui.reply_to == uj.index ||
                      uj.reply_to == ui.index;
    }
  }
  return m;
}

std::vector<int> LocalPositions(const Dialogue& d) {
  const int n = d.num_utterances();
  // prefix[u]: tokens of all strict ancestors of u.
  std::vector<int> prefix(n, 0);
  for (int u = 0; u < n; ++u) {
    const int parent = d.utterances[u].reply_to;
    if (parent >= 0) prefix[u] = prefix[parent] + d.utterances[parent].size();
  }
  std::vector<int> local(d.num_tokens());
  for (const Utterance& u : d.utterances) {
    for (int t = u.begin; t < u.end; ++t) local[t] = prefix[u.index] + (t - u.begin);
  }
  return local;
}

int ThreadPairPosition(int own_thread, int other_thread, int local) {
  if (own_thread * other_thread == 0 || own_thread == other_thread) return local;
  // The lower-numbered thread of the pair is mirrored to negative positions.
  return own_thread < other_thread ? -local : local;
}

int PairwiseDelta(int thread_i, int thread_j, int local_i, int local_j) {
  return ThreadPairPosition(thread_i, thread_j, local_i) -
         ThreadPairPosition(thread_j, thread_i, local_j);
}

PositionTable BuildPositions(const Dialogue& d, const ThreadAssignment& threads) {
  PositionTable table;
  table.local = LocalPositions(d);
  const int n = d.num_tokens();
  table.delta.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const int ti = threads.thread_of[d.UtteranceOf(i)];
    for (int j = 0; j < n; ++j) {
      const int tj = threads.thread_of[d.UtteranceOf(j)];
      table.delta(i, j) = PairwiseDelta(ti, tj, table.local[i], table.local[j]);
    }
  }
  return table;
}

DialogueStructure AnalyzeDialogue(const Dialogue& d) {
  DialogueStructure s;
  s.threads = AssignThreads(d);
  s.token_thread.resize(d.num_tokens());
  for (int t = 0; t < d.num_tokens(); ++t) {
    s.token_thread[t] = s.threads.thread_of[d.UtteranceOf(t)];
  }
  s.masks = BuildMasks(d, s.threads);
  s.positions = BuildPositions(d, s.threads);
  return s;
}

namespace {

nlohmann::json BoolRows(const BoolMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

nlohmann::json StructureToJson(const DialogueStructure& s) {
  nlohmann::json delta = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.positions.delta.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < s.positions.delta.cols(); ++j) {
      row.push_back(s.positions.delta(i, j));
    }
    delta.push_back(std::move(row));
  }
  return {{"threads", s.threads.thread_of},
          {"local_positions", s.positions.local},
          {"mask_thread", BoolRows(s.masks.thread)},
          {"mask_speaker", BoolRows(s.masks.speaker)},
          {"mask_reply", BoolRows(s.masks.reply)},
          {"delta", std::move(delta)}};
}

RotaryMap::RotaryMap(int dim, double base) : dim_(dim), base_(base) {
  if (dim <= 0 || dim % 2 != 0) {
    throw ShapeError("rotary dimension must be a positive even number, got " +
                     std::to_string(dim));
  }
  freqs_.resize(dim / 2);
  for (int k = 0; k < dim / 2; ++k) {
    freqs_[k] = std::pow(base, -2.0 * k / dim);
  }
}

std::vector<double> RotaryMap::Rotate(std::span<const double> v,
                                      double position) const {
  if (static_cast<int>(v.size()) != dim_) {
    throw ShapeError("rotate: vector has " + std::to_string(v.size()) +
                     " entries, rotary dimension is " + std::to_string(dim_));
  }
  std::vector<double> out(v.size());
  for (int k = 0; k < dim_ / 2; ++k) {
    const double angle = position * freqs_[k];
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    out[2 * k] = c * v[2 * k] - s * v[2 * k + 1];
    out[2 * k + 1] = s * v[2 * k] + c * v[2 * k + 1];
  }
  return out;
}

Eigen::MatrixXd RotaryMap::Matrix(double position) const {
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(dim_, dim_);
  for (int k = 0; k < dim_ / 2; ++k) {
    const double angle = position * freqs_[k];
    r(2 * k, 2 * k) = std::cos(angle);
    r(2 * k, 2 * k + 1) = -std::sin(angle);
    r(2 * k + 1, 2 * k) = std::sin(angle);
    r(2 * k + 1, 2 * k + 1) = std::cos(angle);
  }
  return r;
}

}  // namespace diaasq
