#include "diaasq/corpus.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "diaasq/error.h"

namespace diaasq {

using nlohmann::json;

std::string_view SpanKindName(SpanKind kind) {
  switch (kind) {
    case SpanKind::kTarget:
      return "target";
    case SpanKind::kAspect:
      return "aspect";
    case SpanKind::kOpinion:
      return "opinion";
  }
  return "?";
}

std::string_view PolarityName(Polarity polarity) {
  switch (polarity) {
    case Polarity::kPos:
      return "pos";
    case Polarity::kNeg:
      return "neg";
    case Polarity::kOther:
      return "other";
  }
  return "?";
}

std::optional<Polarity> ParsePolarity(std::string_view text) {
  if (text == "pos") return Polarity::kPos;
  if (text == "neg") return Polarity::kNeg;
  if (text == "other") return Polarity::kOther;
  return std::nullopt;
}

QuadKey Quadruple::key() const {
  return QuadKey{{target.start, target.end, aspect.start, aspect.end,
                  opinion.start, opinion.end},
                 polarity};
}

const Span& Quadruple::element(SpanKind kind) const {
  switch (kind) {
    case SpanKind::kTarget:
      return target;
    case SpanKind::kAspect:
      return aspect;
    case SpanKind::kOpinion:
      return opinion;
  }
  return target;
}

const std::vector<Span>& Dialogue::spans(SpanKind kind) const {
  switch (kind) {
    case SpanKind::kTarget:
      return targets;
    case SpanKind::kAspect:
      return aspects;
    case SpanKind::kOpinion:
      return opinions;
  }
  return targets;
}

std::string Dialogue::JoinTokens(int start, int end, std::string_view sep) const {
  std::string out;
  for (int i = start; i < end; ++i) {
    if (i > start) out += sep;
    out += tokens[i].text;
  }
  return out;
}

namespace {

class DialogueParser {
 public:
  explicit DialogueParser(const json& raw) : raw_(raw) {}

  Dialogue Parse() {
    if (!raw_.is_object()) Fail("", "dialogue must be a JSON object");
    const json& id = Require("doc_id");
    if (id.is_string()) {
      dialogue_.id = id.get<std::string>();
    } else if (id.is_number_integer()) {
      dialogue_.id = std::to_string(id.get<int64_t>());
    } else {
      Fail("/doc_id", "must be a string");
    }
    ParseSentences();
    ParseStructure();
    for (SpanKind kind :
         {SpanKind::kTarget, SpanKind::kAspect, SpanKind::kOpinion}) {
      ParseSpanList(kind);
    }
    ParseQuads();
    return std::move(dialogue_);
  }

 private:
  [[noreturn]] void Fail(const std::string& path, const std::string& message) {
    throw DataError(dialogue_.id, path.empty() ? "/" : path, message);
  }

  const json& Require(const char* key) {
    auto it = raw_.find(key);
    if (it == raw_.end()) Fail(std::string("/") + key, "missing field");
    return *it;
  }

  int AsInt(const json& value, const std::string& path) {
    if (!value.is_number_integer()) Fail(path, "must be an integer");
    return value.get<int>();
  }

  void ParseSentences() {
    const json& sentences = Require("sentences");
    if (!sentences.is_array()) Fail("/sentences", "must be an array");
    for (size_t u = 0; u < sentences.size(); ++u) {
      const std::string path = "/sentences/" + std::to_string(u);
      const json& sentence = sentences[u];
      std::vector<std::string> words;
      if (sentence.is_string()) {
        std::istringstream in(sentence.get<std::string>());
        for (std::string w; in >> w;) words.push_back(std::move(w));
      } else if (sentence.is_array()) {
        for (size_t k = 0; k < sentence.size(); ++k) {
          if (!sentence[k].is_string() || sentence[k].get<std::string>().empty()) {
            Fail(path + "/" + std::to_string(k), "token must be a non-empty string");
          }
          words.push_back(sentence[k].get<std::string>());
        }
      } else {
        Fail(path, "must be a token array or a string");
      }
      Utterance utt;
      utt.index = static_cast<int>(u);
      utt.begin = dialogue_.num_tokens();
      for (auto& w : words) {
        dialogue_.tokens.push_back(
            Token{std::move(w), utt.index, dialogue_.num_tokens()});
      }
      utt.end = dialogue_.num_tokens();
      dialogue_.utterances.push_back(utt);
    }
  }

  void ParseStructure() {
    const json& replies = Require("replies");
    const json& speakers = Require("speakers");
    const size_t n = dialogue_.utterances.size();
    if (!replies.is_array() || replies.size() != n) {
      Fail("/replies", "must be an integer array with one entry per utterance (" +
                           std::to_string(n) + ")");
    }
    if (!speakers.is_array() || speakers.size() != n) {
      Fail("/speakers", "must be an integer array with one entry per utterance (" +
                            std::to_string(n) + ")");
    }
    for (size_t u = 0; u < n; ++u) {
      const std::string rpath = "/replies/" + std::to_string(u);
      const int parent = AsInt(replies[u], rpath);
      if (parent < -1) Fail(rpath, "reply index must be -1 or an utterance index");
      if (parent >= static_cast<int>(u)) {
        Fail(rpath, "reply cycle/forward reference: utterance " +
                        std::to_string(u) + " replies to " + std::to_string(parent));
      }
      dialogue_.utterances[u].reply_to = parent;
      const std::string spath = "/speakers/" + std::to_string(u);
      const int speaker = AsInt(speakers[u], spath);
      if (speaker < 0) Fail(spath, "speaker id must be non-negative");
      dialogue_.utterances[u].speaker = speaker;
    }
  }

  Span MakeSpan(int start, int end, SpanKind kind, const json* text,
                const std::string& path) {
    const int n = dialogue_.num_tokens();
    if (start < 0 || end <= start || end > n) {
      Fail(path, "span out of bounds: [" + std::to_string(start) + ", " +
                     std::to_string(end) + ") with " + std::to_string(n) + " tokens");
    }
    if (dialogue_.UtteranceOf(start) != dialogue_.UtteranceOf(end - 1)) {
      Fail(path, "span [" + std::to_string(start) + ", " + std::to_string(end) +
                     ") crosses an utterance boundary");
    }
    Span span{start, end, kind, {}};
    if (text != nullptr) {
      if (!text->is_string()) Fail(path, "span text must be a string");
      span.text = text->get<std::string>();
    } else {
      span.text = dialogue_.JoinTokens(start, end);
    }
    return span;
  }

  void ParseSpanList(SpanKind kind) {
    const std::string key = std::string(SpanKindName(kind)) + "s";
    auto it = raw_.find(key);
    if (it == raw_.end()) return;
    if (!it->is_array()) Fail("/" + key, "must be an array");
    auto& out = kind == SpanKind::kTarget   ? dialogue_.targets
                : kind == SpanKind::kAspect ? dialogue_.aspects
                                            : dialogue_.opinions;
    for (size_t k = 0; k < it->size(); ++k) {
      const std::string path = "/" + key + "/" + std::to_string(k);
      const json& entry = (*it)[k];
      if (!entry.is_array() || entry.size() < 3) {
        Fail(path, "must be [start, end, text]");
      }
      out.push_back(MakeSpan(AsInt(entry[0], path + "/0"),
                             AsInt(entry[1], path + "/1"), kind, &entry[2], path));
    }
  }

  void ParseQuads() {
    std::string key = "quadruples";
    auto it = raw_.find(key);
    if (it == raw_.end()) {
      key = "triplets";
      it = raw_.find(key);
    }
    if (it == raw_.end()) return;
    if (!it->is_array()) Fail("/" + key, "must be an array");
    for (size_t k = 0; k < it->size(); ++k) {
      const std::string path = "/" + key + "/" + std::to_string(k);
      const json& entry = (*it)[k];
      if (!entry.is_array() || entry.size() < 7) {
        Fail(path, "must be [t_s, t_e, a_s, a_e, o_s, o_e, polarity, ...texts]");
      }
      std::array<int, 6> b{};
      for (int i = 0; i < 6; ++i) {
        b[i] = AsInt(entry[i], path + "/" + std::to_string(i));
      }
      if (!entry[6].is_string()) Fail(path + "/6", "polarity must be a string");
      const std::string pol_text = entry[6].get<std::string>();
      const std::optional<Polarity> pol = ParsePolarity(pol_text);

      std::array<std::optional<Span>, 3> elems;
      bool complete = true;
      for (int e = 0; e < 3; ++e) {
        const int s = b[2 * e];
        const int t = b[2 * e + 1];
        if (s == -1 && t == -1) {
          complete = false;
          continue;
        }
        const json* text =
            entry.size() > static_cast<size_t>(7 + e) ? &entry[7 + e] : nullptr;
        elems[e] = MakeSpan(s, t, static_cast<SpanKind>(e), text,
                            path + "/" + std::to_string(2 * e));
      }
      if (!pol && !(!complete && pol_text.empty())) {
        Fail(path + "/6", "polarity must be exactly \"pos\", \"neg\" or \"other\", got \"" +
                              pol_text + "\"");
      }
      if (complete) {
        dialogue_.quads.push_back(
            Quadruple{*elems[0], *elems[1], *elems[2], *pol});
      } else {
        dialogue_.partial_quads.push_back(
            PartialQuadruple{elems[0], elems[1], elems[2], pol});
      }
    }
  }

  const json& raw_;
  Dialogue dialogue_;
};

json SpanToJson(const Span& span) {
  return json::array({span.start, span.end, span.text});
}

}  // namespace

Dialogue ParseDialogue(const json& raw) { return DialogueParser(raw).Parse(); }

Corpus ParseCorpus(const json& raw) {
  if (!raw.is_array()) throw DataError("", "/", "corpus must be a JSON array of dialogues");
  Corpus corpus;
  corpus.reserve(raw.size());
  for (const json& entry : raw) corpus.push_back(ParseDialogue(entry));
  return corpus;
}

Corpus LoadCorpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("", path, std::string("invalid JSON: ") + e.what());
  }
  return ParseCorpus(raw);
}

json DialogueToJson(const Dialogue& d) {
  json out = json::object();
  out["doc_id"] = d.id;
  json sentences = json::array();
  json replies = json::array();
  json speakers = json::array();
  for (const Utterance& u : d.utterances) {
    json words = json::array();
    for (int i = u.begin; i < u.end; ++i) words.push_back(d.tokens[i].text);
    sentences.push_back(std::move(words));
    replies.push_back(u.reply_to);
    speakers.push_back(u.speaker);
  }
  out["sentences"] = std::move(sentences);
  out["replies"] = std::move(replies);
  out["speakers"] = std::move(speakers);
  for (SpanKind kind : {SpanKind::kTarget, SpanKind::kAspect, SpanKind::kOpinion}) {
    json list = json::array();
    for (const Span& s : d.spans(kind)) list.push_back(SpanToJson(s));
    out[std::string(SpanKindName(kind)) + "s"] = std::move(list);
  }
  json quads = json::array();
  for (const Quadruple& q : d.quads) {
    quads.push_back(json::array({q.target.start, q.target.end, q.aspect.start,
                                 q.aspect.end, q.opinion.start, q.opinion.end,
                                 PolarityName(q.polarity), q.target.text,
                                 q.aspect.text, q.opinion.text}));
  }
  for (const PartialQuadruple& q : d.partial_quads) {
    json entry = json::array();
    for (const auto* e : {&q.target, &q.aspect, &q.opinion}) {
      entry.push_back(*e ? (*e)->start : -1);
      entry.push_back(*e ? (*e)->end : -1);
    }
    entry.push_back(q.polarity ? std::string(PolarityName(*q.polarity)) : "");
    for (const auto* e : {&q.target, &q.aspect, &q.opinion}) {
      entry.push_back(*e ? (*e)->text : "");
    }
    quads.push_back(std::move(entry));
  }
  out["quadruples"] = std::move(quads);
  return out;
}

json CorpusToJson(const Corpus& corpus) {
  json out = json::array();
  for (const Dialogue& d : corpus) out.push_back(DialogueToJson(d));
  return out;
}

void SaveCorpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  out << CorpusToJson(corpus).dump() << "\n";
}

// ---------------------------------------------------------------------------
// Validation

json ValidationReport::ToJson() const {
  json list = json::array();
  for (const Violation& v : violations) {
    list.push_back({{"doc_id", v.doc_id}, {"path", v.path}, {"message", v.message}});
  }
  return {{"clean", clean()}, {"violations", std::move(list)}};
}

namespace {

bool TextMatches(const Dialogue& d, const Span& span) {
  return span.text == d.JoinTokens(span.start, span.end, " ") ||
         span.text == d.JoinTokens(span.start, span.end, "");
}

void CheckDialogue(const Dialogue& d, std::vector<Violation>& out) {
  auto add = [&](std::string path, std::string message) {
    out.push_back(Violation{d.id, std::move(path), std::move(message)});
  };
  int roots = 0;
  for (const Utterance& u : d.utterances) roots += u.reply_to == -1;
  if (d.utterances.empty()) {
    add("/sentences", "dialogue has no utterances");
  } else if (roots != 1) {
    add("/replies", "expected exactly one root utterance, found " + std::to_string(roots));
  }
  for (const Utterance& u : d.utterances) {
    if (u.size() == 0) add("/sentences/" + std::to_string(u.index), "empty utterance");
  }

  for (SpanKind kind : {SpanKind::kTarget, SpanKind::kAspect, SpanKind::kOpinion}) {
    const auto& list = d.spans(kind);
    const std::string key = std::string(SpanKindName(kind)) + "s";
    for (size_t k = 0; k < list.size(); ++k) {
      if (!TextMatches(d, list[k])) {
        add("/" + key + "/" + std::to_string(k),
            "span text \"" + list[k].text + "\" does not match covered tokens \"" +
                d.JoinTokens(list[k].start, list[k].end) + "\"");
      }
    }
  }

  std::array<std::set<std::pair<int, int>>, 3> gold;
  for (int k = 0; k < 3; ++k) {
    for (const Span& s : d.spans(static_cast<SpanKind>(k))) gold[k].insert(s.range());
  }
  for (size_t q = 0; q < d.quads.size(); ++q) {
    const std::string path = "/quadruples/" + std::to_string(q);
    for (int k = 0; k < 3; ++k) {
      const Span& s = d.quads[q].element(static_cast<SpanKind>(k));
      if (!TextMatches(d, s)) {
        add(path, std::string(SpanKindName(s.kind)) + " text \"" + s.text +
                      "\" does not match covered tokens \"" +
                      d.JoinTokens(s.start, s.end) + "\"");
      }
      if (!gold[k].contains(s.range())) {
        add(path, std::string(SpanKindName(s.kind)) + " [" + std::to_string(s.start) +
                      ", " + std::to_string(s.end) + ") missing from the " +
                      std::string(SpanKindName(s.kind)) + " list");
      }
    }
  }
}

}  // namespace

ValidationReport ValidateCorpus(const Corpus& corpus) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const Dialogue& d : corpus) {
    if (!seen.insert(d.id).second) {
      report.violations.push_back(Violation{d.id, "/doc_id", "duplicate dialogue id"});
    }
    CheckDialogue(d, report.violations);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Statistics

bool IsIntraUtterance(const Dialogue& d, const Quadruple& q) {
  const int u = d.UtteranceOf(q.target.start);
  return d.UtteranceOf(q.aspect.start) == u && d.UtteranceOf(q.opinion.start) == u;
}

json StatsRow::ToJson() const {
  return {{"dialogues", dialogues},
          {"utterances", utterances},
          {"speakers", speakers},
          {"targets", targets},
          {"aspects", aspects},
          {"opinions", opinions},
          {"pair_ta", pair_ta},
          {"pair_to", pair_to},
          {"pair_ao", pair_ao},
          {"quads", quads},
          {"intra", intra},
          {"cross", cross},
          {"pair_ta_with_partial", pair_ta_with_partial},
          {"pair_to_with_partial", pair_to_with_partial},
          {"pair_ao_with_partial", pair_ao_with_partial}};
}

StatsRow CorpusStats(const Corpus& corpus) {
  using Range = std::pair<int, int>;
  using PairKey = std::pair<Range, Range>;
  StatsRow row;
  for (const Dialogue& d : corpus) {
    ++row.dialogues;
    row.utterances += d.num_utterances();
    std::set<int> speakers;
    for (const Utterance& u : d.utterances) speakers.insert(u.speaker);
    row.speakers += static_cast<int64_t>(speakers.size());
    row.targets += static_cast<int64_t>(d.targets.size());
    row.aspects += static_cast<int64_t>(d.aspects.size());
    row.opinions += static_cast<int64_t>(d.opinions.size());

    std::set<PairKey> ta, to, ao;
    for (const Quadruple& q : d.quads) {
      ta.insert({q.target.range(), q.aspect.range()});
      to.insert({q.target.range(), q.opinion.range()});
      ao.insert({q.aspect.range(), q.opinion.range()});
      ++row.quads;
      if (IsIntraUtterance(d, q)) {
        ++row.intra;
      } else {
        ++row.cross;
      }
    }
    row.raw_pair_ta += static_cast<int64_t>(d.quads.size());
    row.raw_pair_to += static_cast<int64_t>(d.quads.size());
    row.raw_pair_ao += static_cast<int64_t>(d.quads.size());
    row.pair_ta += static_cast<int64_t>(ta.size());
    row.pair_to += static_cast<int64_t>(to.size());
    row.pair_ao += static_cast<int64_t>(ao.size());
    for (const PartialQuadruple& q : d.partial_quads) {
      if (q.target && q.aspect) ta.insert({q.target->range(), q.aspect->range()});
      if (q.target && q.opinion) to.insert({q.target->range(), q.opinion->range()});
      if (q.aspect && q.opinion) ao.insert({q.aspect->range(), q.opinion->range()});
    }
    row.pair_ta_with_partial += static_cast<int64_t>(ta.size());
    row.pair_to_with_partial += static_cast<int64_t>(to.size());
    row.pair_ao_with_partial += static_cast<int64_t>(ao.size());
  }
  return row;
}

std::string FormatStatsTable(
    const std::vector<std::pair<std::string, StatsRow>>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line),
                "%-8s %6s %6s %6s %6s %6s %6s %8s %8s %8s %6s %6s %6s\n", "",
                "Dia.", "Utt.", "Spk.", "Tgt.", "Asp.", "Opi.", "Pair-ta",
                "Pair-to", "Pair-ao", "Quad.", "Intra.", "Cross.");
  out << line;
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof(line),
                  "%-8s %6lld %6lld %6lld %6lld %6lld %6lld %8lld %8lld %8lld "
                  "%6lld %6lld %6lld\n",
                  name.c_str(), static_cast<long long>(r.dialogues),
                  static_cast<long long>(r.utterances),
                  static_cast<long long>(r.speakers),
                  static_cast<long long>(r.targets),
                  static_cast<long long>(r.aspects),
                  static_cast<long long>(r.opinions),
                  static_cast<long long>(r.pair_ta),
                  static_cast<long long>(r.pair_to),
                  static_cast<long long>(r.pair_ao),
                  static_cast<long long>(r.quads), static_cast<long long>(r.intra),
                  static_cast<long long>(r.cross));
    out << line;
    if (r.pair_ta_with_partial != r.pair_ta || r.pair_to_with_partial != r.pair_to ||
        r.pair_ao_with_partial != r.pair_ao) {
      std::snprintf(line, sizeof(line), "%-8s %48s %8lld %8lld %8lld\n", "",
                    "(pairs incl. partial annotations)",
                    static_cast<long long>(r.pair_ta_with_partial),
                    static_cast<long long>(r.pair_to_with_partial),
                    static_cast<long long>(r.pair_ao_with_partial));
      out << line;
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  Add("<pad>");
  Add("<unk>");
}

void Vocabulary::Add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::Build(const Corpus& train) {
  std::unordered_map<std::string, int64_t> counts;
  for (const Dialogue& d : train) {
    for (const auto& t : d.tokens) ++counts[t.text];
  }
  if (counts.empty()) throw DataError("", "/", "cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, int64_t>> sorted(counts.begin(), counts.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, count] : sorted) {
    if (!vocab.ids_.contains(token)) vocab.Add(token);
  }
  return vocab;
}

Vocabulary Vocabulary::FromJson(const json& raw) {
  if (!raw.is_array() || raw.size() < 2 || raw[0] != "<pad>" || raw[1] != "<unk>") {
    throw DataError("", "vocabulary", "expected a token array starting with <pad>, <unk>");
  }
  Vocabulary vocab;
  for (size_t i = 2; i < raw.size(); ++i) vocab.Add(raw[i].get<std::string>());
  return vocab;
}

int Vocabulary::Id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::Encode(const Dialogue& dialogue) const {
  std::vector<int> ids;
  ids.reserve(dialogue.tokens.size());
  for (const auto& t : dialogue.tokens) ids.push_back(Id(t.text));
  return ids;
}

json Vocabulary::ToJson() const { return json(tokens_); }

}  // namespace diaasq
