#include "diaasq/codec.h"

#include <algorithm>
#include <map>

#include "diaasq/error.h"

namespace diaasq {

using nlohmann::json;

int NumLabels(GridKind kind) { return kind == GridKind::kPair ? 3 : 4; }

std::string_view GridName(GridKind kind) {
  switch (kind) {
    case GridKind::kEnt:
      return "ent";
    case GridKind::kPair:
      return "pair";
    case GridKind::kPol:
      return "pol";
  }
  return "?";
}

std::string_view LabelName(GridKind kind, int label) {
  static constexpr std::array<std::string_view, 4> kEnt = {"eps", "tgt", "asp", "opi"};
  static constexpr std::array<std::string_view, 3> kPair = {"eps", "h2h", "t2t"};
  static constexpr std::array<std::string_view, 4> kPol = {"eps", "pos", "neg", "other"};
  if (label < 0 || label >= NumLabels(kind)) return "?";
  switch (kind) {
    case GridKind::kEnt:
      return kEnt[label];
    case GridKind::kPair:
      return kPair[label];
    case GridKind::kPol:
      return kPol[label];
  }
  return "?";
}

EntLabel EntLabelOf(SpanKind kind) {
  return static_cast<EntLabel>(static_cast<int>(kind) + 1);
}

PolLabel PolLabelOf(Polarity polarity) {
  return static_cast<PolLabel>(static_cast<int>(polarity) + 1);
}

LabelGrid LabelGrid::Empty(int n) {
  LabelGrid g;
  g.n = n;
  g.ent = IntMatrix::Zero(n, n);
  g.pair = IntMatrix::Zero(n, n);
  g.pol = IntMatrix::Zero(n, n);
  return g;
}

const IntMatrix& LabelGrid::matrix(GridKind kind) const {
  return kind == GridKind::kEnt ? ent : kind == GridKind::kPair ? pair : pol;
}

IntMatrix& LabelGrid::matrix(GridKind kind) {
  return kind == GridKind::kEnt ? ent : kind == GridKind::kPair ? pair : pol;
}

std::string_view PairModeName(PairMode mode) {
  return mode == PairMode::kStrict ? "strict" : "relaxed";
}

PairMode ParsePairMode(std::string_view text) {
  if (text == "strict") return PairMode::kStrict;
  if (text == "relaxed") return PairMode::kRelaxed;
  throw ConfigError("pair mode must be \"strict\" or \"relaxed\", got \"" +
                    std::string(text) + "\"");
}

namespace {

// Type-ordered pairings (earlier kind is the row).
constexpr std::array<std::pair<SpanKind, SpanKind>, 3> kPairings = {{
    {SpanKind::kTarget, SpanKind::kAspect},
    {SpanKind::kTarget, SpanKind::kOpinion},
    {SpanKind::kAspect, SpanKind::kOpinion},
}};

class GridWriter {
 public:
  explicit GridWriter(int n) : result_{LabelGrid::Empty(n), {}} {}

  void Set(GridKind kind, int row, int col, int label) {
    const int n = result_.grid.n;
    if (row < 0 || col < 0 || row >= n || col >= n) {
      throw ShapeError("cell (" + std::to_string(row) + ", " + std::to_string(col) +
                       ") outside a grid of size " + std::to_string(n));
    }
    int& cell = result_.grid.matrix(kind)(row, col);
    if (cell == 0) {
      cell = label;
    } else if (cell != label) {
      result_.conflicts.push_back(CellConflict{kind, row, col, cell, label});
    }
  }

  void AddSpan(const Span& s) { Set(GridKind::kEnt, s.head(), s.tail(), EntLabelOf(s.kind)); }

  void AddPair(const Span& a, const Span& b) {
    Set(GridKind::kPair, a.head(), b.head(), kPairH2H);
    // Single-token spans on both sides put head and tail on the same cell; the
    // H2H label then stands for both.
    if (a.tail() != a.head() || b.tail() != b.head()) {
      Set(GridKind::kPair, a.tail(), b.tail(), kPairT2T);
    }
  }

  void AddPolarity(const Quadruple& q) {
    const int label = PolLabelOf(q.polarity);
    Set(GridKind::kPol, q.target.head(), q.opinion.head(), label);
    if (q.target.tail() != q.target.head() || q.opinion.tail() != q.opinion.head()) {
      Set(GridKind::kPol, q.target.tail(), q.opinion.tail(), label);
    }
  }

  EncodeResult Finish() { return std::move(result_); }

 private:
  EncodeResult result_;
};

bool Linked(const LabelGrid& g, const Span& a, const Span& b) {
  if (g.pair(a.head(), b.head()) != kPairH2H) return false;
  if (a.tail() == a.head() && b.tail() == b.head()) return true;
  return g.pair(a.tail(), b.tail()) == kPairT2T;
}

}  // namespace

EncodeResult Encode(const Dialogue& d) {
  GridWriter w(d.num_tokens());
  for (SpanKind kind : {SpanKind::kTarget, SpanKind::kAspect, SpanKind::kOpinion}) {
    for (const Span& s : d.spans(kind)) w.AddSpan(s);
  }
  for (const Quadruple& q : d.quads) {
    w.AddSpan(q.target);
    w.AddSpan(q.aspect);
    w.AddSpan(q.opinion);
  }
  for (const Quadruple& q : d.quads) {
    for (const auto& [ka, kb] : kPairings) w.AddPair(q.element(ka), q.element(kb));
  }
  for (const Quadruple& q : d.quads) w.AddPolarity(q);
  return w.Finish();
}

Decoded Decode(const LabelGrid& g, const DecodeConfig& config, const Dialogue* d) {
  if (g.ent.rows() != g.n || g.ent.cols() != g.n || g.pair.rows() != g.n ||
      g.pair.cols() != g.n || g.pol.rows() != g.n || g.pol.cols() != g.n) {
    throw ShapeError("label grid matrices must all be " + std::to_string(g.n) + "x" +
                     std::to_string(g.n));
  }
  Decoded out;
  for (int s = 0; s < g.n; ++s) {
    for (int t = s; t < g.n; ++t) {
      const int label = g.ent(s, t);
      if (label == kEntEps) continue;
      Span span{s, t + 1, static_cast<SpanKind>(label - 1), {}};
      if (d != nullptr) span.text = d->JoinTokens(s, t + 1);
      switch (span.kind) {
        case SpanKind::kTarget:
          out.targets.push_back(std::move(span));
          break;
        case SpanKind::kAspect:
          out.aspects.push_back(std::move(span));
          break;
        case SpanKind::kOpinion:
          out.opinions.push_back(std::move(span));
          break;
      }
    }
  }

  // Spans indexed by head token, so that only H2H-linked candidates are visited.
  auto by_head = [&](const std::vector<Span>& spans) {
    std::vector<std::vector<int>> index(g.n);
    for (int i = 0; i < static_cast<int>(spans.size()); ++i) index[spans[i].head()].push_back(i);
    return index;
  };
  const auto aspects_at = by_head(out.aspects);
  const auto opinions_at = by_head(out.opinions);
  auto linked_from = [&](const Span& from, const std::vector<Span>& spans,
                         const std::vector<std::vector<int>>& at) {
    std::vector<int> hits;
    for (int h = 0; h < g.n; ++h) {
      if (g.pair(from.head(), h) != kPairH2H) continue;
      for (int i : at[h]) {
        if (Linked(g, from, spans[i])) hits.push_back(i);
      }
    }
    return hits;
  };

  for (const Span& t : out.targets) {
    const std::vector<int> aspects = linked_from(t, out.aspects, aspects_at);
    if (aspects.empty()) continue;
    for (int oi : linked_from(t, out.opinions, opinions_at)) {
      const Span& o = out.opinions[oi];
      int label = g.pol(t.head(), o.head());
      if (label == kPolEps) label = g.pol(t.tail(), o.tail());
      if (label == kPolEps) continue;
      for (int ai : aspects) {
        const Span& a = out.aspects[ai];
        if (config.pair_mode == PairMode::kStrict && !Linked(g, a, o)) continue;
        if (static_cast<int>(out.quads.size()) >= config.max_quads) {
          out.truncated = true;
          break;
        }
        out.quads.push_back(Quadruple{t, a, o, static_cast<Polarity>(label - 1)});
      }
      if (out.truncated) break;
    }
    if (out.truncated) break;
  }
  std::sort(out.quads.begin(), out.quads.end(),
            [](const Quadruple& x, const Quadruple& y) { return x.key() < y.key(); });
  return out;
}

json FidelityReport::ToJson() const {
  json per = json::array();
  for (const auto& f : dialogues) {
    per.push_back({{"doc_id", f.doc_id},
                   {"gold", f.gold},
                   {"recovered", f.recovered},
                   {"missed", f.missed},
                   {"spurious", f.spurious},
                   {"conflicts", f.conflicts},
                   {"unexplained_misses", f.unexplained_misses}});
  }
  return {{"gold", gold},
          {"recovered", recovered},
          {"predicted", predicted},
          {"recall", recall()},
          {"precision", precision()},
          {"conflicts", conflicts},
          {"unexplained_misses", unexplained_misses},
          {"dialogues", std::move(per)}};
}

namespace {

std::vector<std::tuple<GridKind, int, int>> CellsOf(const Quadruple& q) {
  std::vector<std::tuple<GridKind, int, int>> cells;
  for (SpanKind k : {SpanKind::kTarget, SpanKind::kAspect, SpanKind::kOpinion}) {
    const Span& s = q.element(k);
    cells.emplace_back(GridKind::kEnt, s.head(), s.tail());
  }
  for (const auto& [ka, kb] : kPairings) {
    const Span& a = q.element(ka);
    const Span& b = q.element(kb);
    cells.emplace_back(GridKind::kPair, a.head(), b.head());
    cells.emplace_back(GridKind::kPair, a.tail(), b.tail());
  }
  cells.emplace_back(GridKind::kPol, q.target.head(), q.opinion.head());
  cells.emplace_back(GridKind::kPol, q.target.tail(), q.opinion.tail());
  return cells;
}

}  // namespace

FidelityReport RoundtripReport(const Corpus& corpus, const DecodeConfig& config) {
  FidelityReport report;
  for (const Dialogue& d : corpus) {
    const EncodeResult enc = Encode(d);
    const Decoded dec = Decode(enc.grid, config);
    std::set<QuadKey> gold;
    for (const Quadruple& q : d.quads) gold.insert(q.key());
    std::set<QuadKey> pred;
    for (const Quadruple& q : dec.quads) pred.insert(q.key());
    std::set<std::tuple<GridKind, int, int>> conflicted;
    for (const CellConflict& c : enc.conflicts) conflicted.emplace(c.grid, c.row, c.col);

    DialogueFidelity f;
    f.doc_id = d.id;
    f.gold = static_cast<int>(gold.size());
    f.conflicts = static_cast<int>(enc.conflicts.size());
    std::set<QuadKey> seen;
    for (const Quadruple& q : d.quads) {
      if (!seen.insert(q.key()).second) continue;
      if (pred.contains(q.key())) {
        ++f.recovered;
        continue;
      }
      ++f.missed;
      bool explained = false;
      for (const auto& cell : CellsOf(q)) explained |= conflicted.contains(cell);
      if (!explained) ++f.unexplained_misses;
    }
    for (const QuadKey& k : pred) f.spurious += !gold.contains(k);

    report.gold += f.gold;
    report.recovered += f.recovered;
    report.predicted += static_cast<int>(pred.size());
    report.conflicts += f.conflicts;
    report.unexplained_misses += f.unexplained_misses;
    report.dialogues.push_back(std::move(f));
  }
  return report;
}

json GridToJson(const LabelGrid& g) {
  json out = {{"n", g.n}};
  for (GridKind kind : kGridKinds) {
    json cells = json::array();
    const IntMatrix& m = g.matrix(kind);
    for (int i = 0; i < g.n; ++i) {
      for (int j = 0; j < g.n; ++j) {
        if (m(i, j) != 0) cells.push_back(json::array({i, j, LabelName(kind, m(i, j))}));
      }
    }
    out[std::string(GridName(kind))] = std::move(cells);
  }
  return out;
}

LabelGrid GridFromJson(const json& raw) {
  if (!raw.is_object() || !raw.contains("n") || !raw["n"].is_number_integer()) {
    throw DataError("", "grid", "expected an object with integer field n");
  }
  LabelGrid g = LabelGrid::Empty(raw["n"].get<int>());
  for (GridKind kind : kGridKinds) {
    const std::string key(GridName(kind));
    if (!raw.contains(key)) continue;
    for (const json& cell : raw[key]) {
      const int i = cell.at(0).get<int>();
      const int j = cell.at(1).get<int>();
      const std::string name = cell.at(2).get<std::string>();
      int label = -1;
      for (int l = 0; l < NumLabels(kind); ++l) {
        if (LabelName(kind, l) == name) label = l;
      }
      if (label < 0 || i < 0 || j < 0 || i >= g.n || j >= g.n) {
        throw DataError("", "grid/" + key, "bad cell [" + std::to_string(i) + ", " +
                                               std::to_string(j) + ", " + name + "]");
      }
      g.matrix(kind)(i, j) = label;
    }
  }
  return g;
}

}  // namespace diaasq
