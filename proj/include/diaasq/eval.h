#ifndef DIAASQ_EVAL_H_
#define DIAASQ_EVAL_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diaasq/corpus.h"
#include "diaasq/error.h"
#include "json.hpp"

namespace diaasq {

// Predicted structures for one dialogue. Span lists are optional; when absent
// the predicted spans are the elements of the predicted quadruples.
struct Prediction {
  std::string doc_id;
  std::vector<Quadruple> quads;
  std::optional<std::array<std::vector<Span>, 3>> spans;  // indexed by SpanKind
};

using Predictions = std::vector<Prediction>;

// Gold structures repackaged as predictions (spans always present).
Predictions PredictionsFromCorpus(const Corpus& corpus);

// [{"doc_id", "quadruples": [[t_s,t_e,a_s,a_e,o_s,o_e,"pos"]], "targets": [[s,e]], ...}]
nlohmann::json PredictionsToJson(const Predictions& predictions);
Predictions PredictionsFromJson(const nlohmann::json& raw);
void SavePredictions(const Predictions& predictions, const std::string& path);
// Accepts either a predictions file or a corpus file.
Predictions LoadPredictions(const std::string& path);

// Raised when gold and predicted doc ids do not line up.
class MismatchError : public Error {
 public:
  MismatchError(std::vector<std::string> missing, std::vector<std::string> unexpected);

  const std::vector<std::string>& missing() const { return missing_; }        // gold only
  const std::vector<std::string>& unexpected() const { return unexpected_; }  // pred only

 private:
  std::vector<std::string> missing_;
  std::vector<std::string> unexpected_;
};

struct PRF {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const {
    if (tp == 0) return 0.0;
    const double p = precision();
    const double r = recall();
    return 2.0 * p * r / (p + r);
  }
  // No gold and no predicted items.
  bool empty() const { return tp + fp + fn == 0; }
  PRF& operator+=(const PRF& other);
  bool operator==(const PRF&) const = default;
  nlohmann::json ToJson() const;
};

enum class Pairing { kTargetAspect = 0, kTargetOpinion = 1, kAspectOpinion = 2 };
std::string_view PairingName(Pairing pairing);

// How far apart two utterances are: index difference or reply-tree path length.
enum class CrossDistance { kIndex, kTree };
std::string_view CrossDistanceName(CrossDistance distance);
CrossDistance ParseCrossDistance(std::string_view text);  // ConfigError

inline constexpr int kNumLevels = 4;  // 0, 1, 2, >=3

int UtteranceDistance(const Dialogue& dialogue, int u, int v, CrossDistance distance);
// Maximum distance over the three element pairs of the quadruple.
int CrossLevel(const Dialogue& dialogue, const Quadruple& quad, CrossDistance distance);
inline int LevelBucket(int level) { return level < kNumLevels - 1 ? level : kNumLevels - 1; }

// Dialogue pairs matched by doc id, in gold order. Throws MismatchError.
using Alignment = std::vector<std::pair<const Dialogue*, const Prediction*>>;
Alignment Align(const Corpus& gold, const Predictions& predictions);

PRF SpanF1(const Alignment& aligned, SpanKind kind);
PRF PairF1(const Alignment& aligned, Pairing pairing);

struct QuadScores {
  PRF micro;
  PRF identification;  // polarity ignored
};
QuadScores QuadF1(const Alignment& aligned);

struct CrossScores {
  PRF intra;
  PRF cross;
  std::array<PRF, kNumLevels> levels;
};
CrossScores CrossBreakdown(const Alignment& aligned, CrossDistance distance);

struct MetricReport {
  std::array<PRF, 3> spans;
  std::array<PRF, 3> pairs;
  QuadScores quad;
  CrossScores cross;
  CrossDistance distance = CrossDistance::kIndex;

  nlohmann::json ToJson() const;
  // Plain-text table: one row of F1 scores plus a per-level section.
  std::string FormatTable() const;
};

MetricReport Evaluate(const Corpus& gold, const Predictions& predictions,
                      CrossDistance distance = CrossDistance::kIndex);

}  // namespace diaasq

#endif  // DIAASQ_EVAL_H_
