#ifndef DIAASQ_CORPUS_H_
#define DIAASQ_CORPUS_H_

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace diaasq {

enum class SpanKind { kTarget = 0, kAspect = 1, kOpinion = 2 };
enum class Polarity { kPos = 0, kNeg = 1, kOther = 2 };

std::string_view SpanKindName(SpanKind kind);
std::string_view PolarityName(Polarity polarity);
// Accepts exactly "pos", "neg" or "other".
std::optional<Polarity> ParsePolarity(std::string_view text);

struct Token {
  std::string text;
  int utterance_index = 0;
  int global_index = 0;
};

// Tokens of an utterance are the global range [begin, end).
struct Utterance {
  int index = 0;
  int speaker = 0;
  int reply_to = -1;
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
};

// End-exclusive global token range.
struct Span {
  int start = 0;
  int end = 0;
  SpanKind kind = SpanKind::kTarget;
  std::string text;

  int head() const { return start; }
  int tail() const { return end - 1; }
  std::pair<int, int> range() const { return {start, end}; }
};

struct QuadKey {
  std::array<int, 6> bounds{};  // t_s, t_e, a_s, a_e, o_s, o_e
  Polarity polarity = Polarity::kPos;

  auto operator<=>(const QuadKey&) const = default;
};

struct Quadruple {
  Span target;
  Span aspect;
  Span opinion;
  Polarity polarity = Polarity::kPos;

  QuadKey key() const;
  const Span& element(SpanKind kind) const;
};

// A gold annotation where at least one element is missing (-1 indices in the
// released files). Kept apart from the complete quadruples.
struct PartialQuadruple {
  std::optional<Span> target;
  std::optional<Span> aspect;
  std::optional<Span> opinion;
  std::optional<Polarity> polarity;
};

struct Dialogue {
  std::string id;
  std::vector<Token> tokens;
  std::vector<Utterance> utterances;
  std::vector<Span> targets;
  std::vector<Span> aspects;
  std::vector<Span> opinions;
  std::vector<Quadruple> quads;
  std::vector<PartialQuadruple> partial_quads;

  int num_tokens() const { return static_cast<int>(tokens.size()); }
  int num_utterances() const { return static_cast<int>(utterances.size()); }
  int UtteranceOf(int global_index) const {
    return tokens[global_index].utterance_index;
  }
  const std::vector<Span>& spans(SpanKind kind) const;
  // Tokens of [start, end) joined by a single space.
  std::string JoinTokens(int start, int end, std::string_view sep = " ") const;
};

using Corpus = std::vector<Dialogue>;

// Parses one dialogue object. Throws DataError naming the dialogue id and the
// field path on schema violations, out-of-range spans, forward reply
// references and spans that cross an utterance boundary.
Dialogue ParseDialogue(const nlohmann::json& raw);
Corpus ParseCorpus(const nlohmann::json& raw);
// Throws IoError if the file cannot be read, DataError on malformed content.
Corpus LoadCorpus(const std::string& path);

nlohmann::json DialogueToJson(const Dialogue& dialogue);
nlohmann::json CorpusToJson(const Corpus& corpus);
void SaveCorpus(const Corpus& corpus, const std::string& path);

struct Violation {
  std::string doc_id;
  std::string path;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool clean() const { return violations.empty(); }
  nlohmann::json ToJson() const;
};

ValidationReport ValidateCorpus(const Corpus& corpus);

// One row of the dataset statistics table.
struct StatsRow {
  int64_t dialogues = 0;
  int64_t utterances = 0;
  int64_t speakers = 0;
  int64_t targets = 0;
  int64_t aspects = 0;
  int64_t opinions = 0;
  int64_t pair_ta = 0;
  int64_t pair_to = 0;
  int64_t pair_ao = 0;
  int64_t quads = 0;
  int64_t intra = 0;
  int64_t cross = 0;
  // Pair counts when partial annotations are projected too.
  int64_t pair_ta_with_partial = 0;
  int64_t pair_to_with_partial = 0;
  int64_t pair_ao_with_partial = 0;
  // Raw projected pair multiset sizes (before per-dialogue dedup).
  int64_t raw_pair_ta = 0;
  int64_t raw_pair_to = 0;
  int64_t raw_pair_ao = 0;

  bool operator==(const StatsRow&) const = default;
  nlohmann::json ToJson() const;
};

StatsRow CorpusStats(const Corpus& corpus);
// Fixed-width table with one line per named corpus: dialogue, utterance,
// speaker, span, pair, quadruple, intra and cross counts.
std::string FormatStatsTable(const std::vector<std::pair<std::string, StatsRow>>& rows);

// True when all three elements of the quadruple lie in one utterance.
bool IsIntraUtterance(const Dialogue& dialogue, const Quadruple& quad);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  // Frequency-descending, ties broken lexicographically. Throws DataError on
  // an empty corpus.
  static Vocabulary Build(const Corpus& train);
  static Vocabulary FromJson(const nlohmann::json& raw);

  int Id(const std::string& token) const;
  const std::string& Token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  std::vector<int> Encode(const Dialogue& dialogue) const;

  nlohmann::json ToJson() const;
  std::string Serialize() const { return ToJson().dump(); }

 private:
  void Add(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

}  // namespace diaasq

#endif  // DIAASQ_CORPUS_H_
