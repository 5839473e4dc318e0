#include "diaasq/eval.h"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace diaasq {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kSpanKeys = {"targets", "aspects", "opinions"};

std::string JoinIds(const std::vector<std::string>& ids) {
  std::string out;
  for (const std::string& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out.empty() ? "(none)" : out;
}

int ReadIndex(const json& v, const std::string& doc, const std::string& path) {
  if (!v.is_number_integer()) throw DataError(doc, path, "expected an integer");
  return v.get<int>();
}

Span ReadSpan(const json& entry, SpanKind kind, const std::string& doc,
              const std::string& path) {
  if (!entry.is_array() || entry.size() < 2) throw DataError(doc, path, "must be [start, end]");
  Span s{ReadIndex(entry[0], doc, path + "/0"), ReadIndex(entry[1], doc, path + "/1"), kind, {}};
  if (s.start < 0 || s.end <= s.start) throw DataError(doc, path, "empty or negative span");
  return s;
}

void CheckBounds(const Dialogue& d, const Span& s, const std::string& what) {
  if (s.end > d.num_tokens()) {
    throw DataError(d.id, what,
                    "predicted span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                        ") exceeds " + std::to_string(d.num_tokens()) + " tokens");
  }
}

using SpanSet = std::set<std::pair<int, int>>;

SpanSet GoldSpans(const Dialogue& d, SpanKind kind) {
  SpanSet out;
  for (const Span& s : d.spans(kind)) out.insert(s.range());
  return out;
}

SpanSet PredSpans(const Prediction& p, SpanKind kind) {
  SpanSet out;
  if (p.spans) {
    for (const Span& s : (*p.spans)[static_cast<int>(kind)]) out.insert(s.range());
  } else {
    for (const Quadruple& q : p.quads) out.insert(q.element(kind).range());
  }
  return out;
}

template <typename T>
PRF Count(const std::set<T>& gold, const std::set<T>& pred) {
  PRF r;
  for (const T& item : pred) {
    if (gold.count(item)) {
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<int64_t>(gold.size()) - r.tp;
  return r;
}

std::pair<SpanKind, SpanKind> Elements(Pairing pairing) {
  switch (pairing) {
    case Pairing::kTargetAspect: return {SpanKind::kTarget, SpanKind::kAspect};
    case Pairing::kTargetOpinion: return {SpanKind::kTarget, SpanKind::kOpinion};
    case Pairing::kAspectOpinion: break;
  }
  return {SpanKind::kAspect, SpanKind::kOpinion};
}

using PairKey = std::array<int, 4>;

std::set<PairKey> Pairs(const std::vector<Quadruple>& quads, Pairing pairing) {
  const auto [x, y] = Elements(pairing);
  std::set<PairKey> out;
  for (const Quadruple& q : quads) {
    const Span& a = q.element(x);
    const Span& b = q.element(y);
    out.insert({a.start, a.end, b.start, b.end});
  }
  return out;
}

std::set<QuadKey> Keys(const std::vector<Quadruple>& quads) {
  std::set<QuadKey> out;
  for (const Quadruple& q : quads) out.insert(q.key());
  return out;
}

std::set<std::array<int, 6>> Triples(const std::vector<Quadruple>& quads) {
  std::set<std::array<int, 6>> out;
  for (const Quadruple& q : quads) out.insert(q.key().bounds);
  return out;
}

json SpanListJson(const std::vector<Span>& spans) {
  json out = json::array();
  for (const Span& s : spans) out.push_back({s.start, s.end});
  return out;
}

}  // namespace

Predictions PredictionsFromCorpus(const Corpus& corpus) {
  Predictions out;
  out.reserve(corpus.size());
  for (const Dialogue& d : corpus) {
    out.push_back({d.id, d.quads, std::array{d.targets, d.aspects, d.opinions}});
  }
  return out;
}

json PredictionsToJson(const Predictions& predictions) {
  json out = json::array();
  for (const Prediction& p : predictions) {
    json quads = json::array();
    for (const Quadruple& q : p.quads) {
      const QuadKey k = q.key();
      json row = json::array();
      for (int b : k.bounds) row.push_back(b);
      row.push_back(PolarityName(k.polarity));
      quads.push_back(std::move(row));
    }
    json entry = {{"doc_id", p.doc_id}, {"quadruples", std::move(quads)}};
    if (p.spans) {
      for (int k = 0; k < 3; ++k) entry[std::string(kSpanKeys[k])] = SpanListJson((*p.spans)[k]);
    }
    out.push_back(std::move(entry));
  }
  return out;
}

Predictions PredictionsFromJson(const json& raw) {
  if (!raw.is_array()) throw DataError("", "/", "predictions must be a JSON array");
  Predictions out;
  std::set<std::string> seen;
  for (size_t i = 0; i < raw.size(); ++i) {
    const json& entry = raw[i];
    const std::string base = "/" + std::to_string(i);
    if (!entry.is_object() || !entry.contains("doc_id") || !entry["doc_id"].is_string()) {
      throw DataError("", base, "entry needs a string doc_id");
    }
    Prediction p;
    p.doc_id = entry["doc_id"].get<std::string>();
    if (!seen.insert(p.doc_id).second) throw DataError(p.doc_id, base, "duplicate doc_id");
    const json& quads = entry.value("quadruples", json::array());
    if (!quads.is_array()) throw DataError(p.doc_id, base + "/quadruples", "must be an array");
    for (size_t k = 0; k < quads.size(); ++k) {
      const std::string path = base + "/quadruples/" + std::to_string(k);
      const json& q = quads[k];
      if (!q.is_array() || q.size() < 7 || !q[6].is_string()) {
        throw DataError(p.doc_id, path, "must be [t_s, t_e, a_s, a_e, o_s, o_e, polarity]");
      }
      const auto pol = ParsePolarity(q[6].get<std::string>());
      if (!pol) throw DataError(p.doc_id, path + "/6", "unknown polarity");
      Quadruple quad;
      quad.target = ReadSpan(json::array({q[0], q[1]}), SpanKind::kTarget, p.doc_id, path);
      quad.aspect = ReadSpan(json::array({q[2], q[3]}), SpanKind::kAspect, p.doc_id, path);
      quad.opinion = ReadSpan(json::array({q[4], q[5]}), SpanKind::kOpinion, p.doc_id, path);
      quad.polarity = *pol;
      p.quads.push_back(std::move(quad));
    }
    if (entry.contains(kSpanKeys[0]) || entry.contains(kSpanKeys[1]) ||
        entry.contains(kSpanKeys[2])) {
      std::array<std::vector<Span>, 3> spans;
      for (int k = 0; k < 3; ++k) {
        const std::string key(kSpanKeys[k]);
        const json& list = entry.value(key, json::array());
        if (!list.is_array()) throw DataError(p.doc_id, base + "/" + key, "must be an array");
        for (size_t s = 0; s < list.size(); ++s) {
          spans[k].push_back(ReadSpan(list[s], static_cast<SpanKind>(k), p.doc_id,
                                      base + "/" + key + "/" + std::to_string(s)));
        }
      }
      p.spans = std::move(spans);
    }
    out.push_back(std::move(p));
  }
  return out;
}

void SavePredictions(const Predictions& predictions, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions: " + path);
  out << PredictionsToJson(predictions).dump(1) << '\n';
  if (!out) throw IoError("failed writing predictions: " + path);
}

Predictions LoadPredictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file: " + path);
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("", path, std::string("invalid JSON: ") + e.what());
  }
  if (raw.is_array() && !raw.empty() && raw[0].is_object() && raw[0].contains("sentences")) {
    return PredictionsFromCorpus(ParseCorpus(raw));
  }
  return PredictionsFromJson(raw);
}

MismatchError::MismatchError(std::vector<std::string> missing,
                             std::vector<std::string> unexpected)
    : Error("doc_id mismatch between gold and predictions; missing predictions for: " +
            JoinIds(missing) + "; no gold dialogue for: " + JoinIds(unexpected)),
      missing_(std::move(missing)),
      unexpected_(std::move(unexpected)) {}

PRF& PRF::operator+=(const PRF& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

json PRF::ToJson() const {
  return {{"precision", precision()}, {"recall", recall()}, {"f1", f1()},
          {"tp", tp},                 {"fp", fp},           {"fn", fn}};
}

std::string_view PairingName(Pairing pairing) {
  switch (pairing) {
    case Pairing::kTargetAspect: return "t-a";
    case Pairing::kTargetOpinion: return "t-o";
    case Pairing::kAspectOpinion: break;
  }
  return "a-o";
}

std::string_view CrossDistanceName(CrossDistance distance) {
  return distance == CrossDistance::kIndex ? "index" : "tree";
}

CrossDistance ParseCrossDistance(std::string_view text) {
  if (text == "index") return CrossDistance::kIndex;
  if (text == "tree") return CrossDistance::kTree;
  throw ConfigError("cross distance must be \"index\" or \"tree\", got \"" + std::string(text) +
                    "\"");
}

int UtteranceDistance(const Dialogue& d, int u, int v, CrossDistance distance) {
  if (distance == CrossDistance::kIndex) return std::abs(u - v);
  // Path length through the lowest common ancestor of the reply tree.
  auto depth = [&](int x) {
    int n = 0;
    while (d.utterances[x].reply_to >= 0) {
      x = d.utterances[x].reply_to;
      ++n;
    }
    return n;
  };
  int du = depth(u);
  int dv = depth(v);
  int steps = 0;
  while (du > dv) { u = d.utterances[u].reply_to; --du; ++steps; }
  while (dv > du) { v = d.utterances[v].reply_to; --dv; ++steps; }
  while (u != v && d.utterances[u].reply_to >= 0 && d.utterances[v].reply_to >= 0) {
    u = d.utterances[u].reply_to;
    v = d.utterances[v].reply_to;
    steps += 2;
  }
  return steps;
}

int CrossLevel(const Dialogue& d, const Quadruple& q, CrossDistance distance) {
  const int t = d.UtteranceOf(q.target.start);
  const int a = d.UtteranceOf(q.aspect.start);
  const int o = d.UtteranceOf(q.opinion.start);
  return std::max({UtteranceDistance(d, t, a, distance), UtteranceDistance(d, t, o, distance),
                   UtteranceDistance(d, a, o, distance)});
}

Alignment Align(const Corpus& gold, const Predictions& predictions) {
  std::map<std::string, const Prediction*> by_id;
  for (const Prediction& p : predictions) by_id.emplace(p.doc_id, &p);
  Alignment out;
  std::vector<std::string> missing;
  std::set<std::string> used;
  for (const Dialogue& d : gold) {
    auto it = by_id.find(d.id);
    if (it == by_id.end()) {
      missing.push_back(d.id);
      continue;
    }
    used.insert(d.id);
    out.emplace_back(&d, it->second);
  }
  std::vector<std::string> unexpected;
  for (const Prediction& p : predictions) {
    if (!used.count(p.doc_id)) unexpected.push_back(p.doc_id);
  }
  if (!missing.empty() || !unexpected.empty()) {
    throw MismatchError(std::move(missing), std::move(unexpected));
  }
  for (const auto& [d, p] : out) {
    for (const Quadruple& q : p->quads) {
      for (int k = 0; k < 3; ++k) CheckBounds(*d, q.element(static_cast<SpanKind>(k)), "quadruples");
    }
    if (p->spans) {
      for (int k = 0; k < 3; ++k) {
        for (const Span& s : (*p->spans)[k]) CheckBounds(*d, s, std::string(kSpanKeys[k]));
      }
    }
  }
  return out;
}

PRF SpanF1(const Alignment& aligned, SpanKind kind) {
  PRF total;
  for (const auto& [d, p] : aligned) total += Count(GoldSpans(*d, kind), PredSpans(*p, kind));
  return total;
}

PRF PairF1(const Alignment& aligned, Pairing pairing) {
  PRF total;
  for (const auto& [d, p] : aligned) {
    total += Count(Pairs(d->quads, pairing), Pairs(p->quads, pairing));
  }
  return total;
}

QuadScores QuadF1(const Alignment& aligned) {
  QuadScores s;
  for (const auto& [d, p] : aligned) {
    s.micro += Count(Keys(d->quads), Keys(p->quads));
    s.identification += Count(Triples(d->quads), Triples(p->quads));
  }
  return s;
}

CrossScores CrossBreakdown(const Alignment& aligned, CrossDistance distance) {
  CrossScores s;
  for (const auto& [d, p] : aligned) {
    std::array<std::set<QuadKey>, kNumLevels> gold;
    std::array<std::set<QuadKey>, kNumLevels> pred;
    for (const Quadruple& q : d->quads) {
      gold[LevelBucket(CrossLevel(*d, q, distance))].insert(q.key());
    }
    for (const Quadruple& q : p->quads) {
      pred[LevelBucket(CrossLevel(*d, q, distance))].insert(q.key());
    }
    for (int b = 0; b < kNumLevels; ++b) {
      const PRF c = Count(gold[b], pred[b]);
      s.levels[b] += c;
      (b == 0 ? s.intra : s.cross) += c;
    }
  }
  return s;
}

MetricReport Evaluate(const Corpus& gold, const Predictions& predictions,
                      CrossDistance distance) {
  const Alignment aligned = Align(gold, predictions);
  MetricReport r;
  r.distance = distance;
  for (int k = 0; k < 3; ++k) {
    r.spans[k] = SpanF1(aligned, static_cast<SpanKind>(k));
    r.pairs[k] = PairF1(aligned, static_cast<Pairing>(k));
  }
  r.quad = QuadF1(aligned);
  r.cross = CrossBreakdown(aligned, distance);
  return r;
}

json MetricReport::ToJson() const {
  json out;
  for (int k = 0; k < 3; ++k) {
    out["span"][std::string(SpanKindName(static_cast<SpanKind>(k)))] = spans[k].ToJson();
    out["pair"][std::string(PairingName(static_cast<Pairing>(k)))] = pairs[k].ToJson();
  }
  out["quad_micro"] = quad.micro.ToJson();
  out["quad_identification"] = quad.identification.ToJson();
  out["intra"] = cross.intra.ToJson();
  out["cross"] = cross.cross.ToJson();
  json levels = json::array();
  for (int b = 0; b < kNumLevels; ++b) {
    json level = cross.levels[b].ToJson();
    level["level"] = b == kNumLevels - 1 ? ">=3" : std::to_string(b);
    levels.push_back(std::move(level));
  }
  out["levels"] = std::move(levels);
  out["cross_distance"] = CrossDistanceName(distance);
  return out;
}

std::string MetricReport::FormatTable() const {
  auto pct = [](const PRF& m) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * m.f1();
    return s.str();
  };
  std::ostringstream out;
  out << std::left;
  const std::array<std::string, 10> head = {"T",   "A",    "O",    "T-A",    "T-O",
                                            "A-O", "Micro", "Iden", "Intra", "Cross"};
  const std::array<const PRF*, 10> cols = {&spans[0], &spans[1], &spans[2], &pairs[0],
                                           &pairs[1], &pairs[2], &quad.micro,
                                           &quad.identification, &cross.intra, &cross.cross};
  for (const std::string& h : head) out << std::setw(8) << h;
  out << '\n';
  for (const PRF* m : cols) out << std::setw(8) << pct(*m);
  out << "\n\nCross-utterance levels (" << CrossDistanceName(distance) << " distance)\n";
  out << std::setw(10) << "level" << std::setw(8) << "gold" << std::setw(8) << "pred"
      << std::setw(8) << "P" << std::setw(8) << "R" << std::setw(8) << "F1" << '\n';
  const std::array<std::string, kNumLevels> names = {"0", "1", "2", ">=3"};
  for (int b = 0; b < kNumLevels; ++b) {
    const PRF& m = cross.levels[b];
    std::ostringstream p;
    std::ostringstream r;
    p << std::fixed << std::setprecision(2) << 100.0 * m.precision();
    r << std::fixed << std::setprecision(2) << 100.0 * m.recall();
    out << std::setw(10) << names[b] << std::setw(8) << m.tp + m.fn << std::setw(8)
        << m.tp + m.fp << std::setw(8) << p.str() << std::setw(8) << r.str() << std::setw(8)
        << pct(m) << '\n';
  }
  return out.str();
}

}  // namespace diaasq
