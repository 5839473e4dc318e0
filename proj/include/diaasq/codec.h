#ifndef DIAASQ_CODEC_H_
#define DIAASQ_CODEC_H_

#include <array>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "diaasq/corpus.h"
#include "diaasq/structure.h"
#include "json.hpp"

namespace diaasq {

// Label index 0 is the null label of every matrix.
enum EntLabel : int { kEntEps = 0, kEntTgt = 1, kEntAsp = 2, kEntOpi = 3 };
enum PairLabel : int { kPairEps = 0, kPairH2H = 1, kPairT2T = 2 };
enum PolLabel : int { kPolEps = 0, kPolPos = 1, kPolNeg = 2, kPolOther = 3 };

enum class GridKind { kEnt = 0, kPair = 1, kPol = 2 };
inline constexpr std::array<GridKind, 3> kGridKinds = {GridKind::kEnt, GridKind::kPair,
                                                       GridKind::kPol};

int NumLabels(GridKind kind);
std::string_view GridName(GridKind kind);
std::string_view LabelName(GridKind kind, int label);

EntLabel EntLabelOf(SpanKind kind);
PolLabel PolLabelOf(Polarity polarity);

struct LabelGrid {
  int n = 0;
  IntMatrix ent;
  IntMatrix pair;
  IntMatrix pol;

  static LabelGrid Empty(int n);
  const IntMatrix& matrix(GridKind kind) const;
  IntMatrix& matrix(GridKind kind);
};

enum class PairMode { kStrict, kRelaxed };

std::string_view PairModeName(PairMode mode);
// Throws ConfigError on anything but "strict" or "relaxed".
PairMode ParsePairMode(std::string_view text);

struct DecodeConfig {
  PairMode pair_mode = PairMode::kStrict;
  // Safety limit per dialogue. A barely trained model can label most cells
  // and would otherwise produce a combinatorial number of quadruples.
  int max_quads = 10000;
};

struct CellConflict {
  GridKind grid;
  int row;
  int col;
  int kept;      // label already in the cell
  int rejected;  // label that lost
};

struct EncodeResult {
  LabelGrid grid;
  std::vector<CellConflict> conflicts;
};

// Writes gold spans and quadruples into the three label matrices. When two
// annotations claim one cell with different labels the first (file order)
// wins and the clash is recorded. Throws ShapeError for spans outside the
// grid.
EncodeResult Encode(const Dialogue& dialogue);

struct Decoded {
  std::vector<Span> targets;
  std::vector<Span> aspects;
  std::vector<Span> opinions;
  std::vector<Quadruple> quads;
  bool truncated = false;  // max_quads was reached
};

// Reads spans, pair links and polarities back from a grid. When `dialogue` is
// given, span texts are filled from its tokens.
Decoded Decode(const LabelGrid& grid, const DecodeConfig& config,
               const Dialogue* dialogue = nullptr);

struct DialogueFidelity {
  std::string doc_id;
  int gold = 0;
  int recovered = 0;
  int missed = 0;
  int spurious = 0;
  int conflicts = 0;
  // Missed quadruples with no conflicted cell among their own cells.
  int unexplained_misses = 0;
};

struct FidelityReport {
  std::vector<DialogueFidelity> dialogues;
  int gold = 0;
  int recovered = 0;
  int predicted = 0;
  int conflicts = 0;
  int unexplained_misses = 0;

  double recall() const { return gold == 0 ? 1.0 : double(recovered) / gold; }
  double precision() const {
    return predicted == 0 ? 1.0 : double(recovered) / predicted;
  }
  nlohmann::json ToJson() const;
};

// Measures decode(encode(gold)) against the gold quadruples.
FidelityReport RoundtripReport(const Corpus& corpus, const DecodeConfig& config);

// Sparse dump: {"n": N, "ent": [[row, col, label], ...], "pair": ..., "pol": ...}.
nlohmann::json GridToJson(const LabelGrid& grid);
LabelGrid GridFromJson(const nlohmann::json& raw);

}  // namespace diaasq

#endif  // DIAASQ_CODEC_H_
