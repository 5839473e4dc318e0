#include "support/oracle.h"

#include <algorithm>
#include <cstdlib>

namespace diaasq::testing {

namespace {

using Item = std::vector<int>;

std::vector<Item> Unique(std::vector<Item> items) {
  std::vector<Item> out;
  for (Item& x : items) {
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(std::move(x));
  }
  return out;
}

void Tally(const std::vector<Item>& gold_raw, const std::vector<Item>& pred_raw, Counts& c) {
  const std::vector<Item> gold = Unique(gold_raw);
  const std::vector<Item> pred = Unique(pred_raw);
  for (const Item& p : pred) {
    bool hit = false;
    for (const Item& g : gold) hit = hit || g == p;
    if (hit) {
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  for (const Item& g : gold) {
    bool hit = false;
    for (const Item& p : pred) hit = hit || g == p;
    if (!hit) ++c.fn;
  }
}

Item QuadItem(const Quadruple& q, bool with_polarity) {
  Item x = {q.target.start, q.target.end, q.aspect.start, q.aspect.end, q.opinion.start,
            q.opinion.end};
  if (with_polarity) x.push_back(static_cast<int>(q.polarity));
  return x;
}

int Level(const Dialogue& d, const Quadruple& q) {
  const int u[3] = {d.tokens[q.target.start].utterance_index,
                    d.tokens[q.aspect.start].utterance_index,
                    d.tokens[q.opinion.start].utterance_index};
  int best = 0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) best = std::max(best, std::abs(u[a] - u[b]));
  }
  return std::min(best, 3);
}

}  // namespace

OracleReport BruteForce(const Corpus& gold, const Predictions& pred) {
  OracleReport r;
  for (size_t i = 0; i < gold.size(); ++i) {
    const Dialogue& d = gold[i];
    const Prediction& p = pred[i];
    for (int k = 0; k < 3; ++k) {
      std::vector<Item> g, q;
      for (const Span& s : d.spans(static_cast<SpanKind>(k))) g.push_back({s.start, s.end});
      if (p.spans) {
        for (const Span& s : (*p.spans)[k]) q.push_back({s.start, s.end});
      } else {
        for (const Quadruple& x : p.quads) {
          const Span& s = x.element(static_cast<SpanKind>(k));
          q.push_back({s.start, s.end});
        }
      }
      Tally(g, q, r.spans[k]);
    }
    const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (int k = 0; k < 3; ++k) {
      std::vector<Item> g, q;
      auto project = [&](const Quadruple& x) {
        const Span& a = x.element(static_cast<SpanKind>(pairs[k][0]));
        const Span& b = x.element(static_cast<SpanKind>(pairs[k][1]));
        return Item{a.start, a.end, b.start, b.end};
      };
      for (const Quadruple& x : d.quads) g.push_back(project(x));
      for (const Quadruple& x : p.quads) q.push_back(project(x));
      Tally(g, q, r.pairs[k]);
    }
    std::vector<Item> gm, pm, gi, pi;
    std::array<std::vector<Item>, 4> gl, pl;
    for (const Quadruple& x : d.quads) {
      gm.push_back(QuadItem(x, true));
      gi.push_back(QuadItem(x, false));
      gl[Level(d, x)].push_back(QuadItem(x, true));
    }
    for (const Quadruple& x : p.quads) {
      pm.push_back(QuadItem(x, true));
      pi.push_back(QuadItem(x, false));
      pl[Level(d, x)].push_back(QuadItem(x, true));
    }
    Tally(gm, pm, r.micro);
    Tally(gi, pi, r.iden);
    for (int b = 0; b < 4; ++b) {
      Counts c;
      Tally(gl[b], pl[b], c);
      r.levels[b].tp += c.tp;
      r.levels[b].fp += c.fp;
      r.levels[b].fn += c.fn;
      Counts& side = b == 0 ? r.intra : r.cross;
      side.tp += c.tp;
      side.fp += c.fp;
      side.fn += c.fn;
    }
  }
  return r;
}

Predictions RandomPredictions(std::mt19937_64& rng, const Corpus& gold) {
  std::bernoulli_distribution coin(0.5);
  Predictions out;
  for (const Dialogue& d : gold) {
    Prediction p;
    p.doc_id = d.id;
    const int n = d.num_tokens();
    std::uniform_int_distribution<int> tok(0, n - 1);
    auto random_span = [&](SpanKind kind) {
      const int s = tok(rng);
      const int e = std::min(n, s + 1 + static_cast<int>(rng() % 2));
      return Span{s, e, kind, ""};
    };
    for (const Quadruple& q : d.quads) {
      const int action = static_cast<int>(rng() % 4);
      if (action == 0) continue;  // dropped
      Quadruple x = q;
      if (action == 2) x.polarity = static_cast<Polarity>((static_cast<int>(q.polarity) + 1) % 3);
      if (action == 3) x.aspect = random_span(SpanKind::kAspect);
      p.quads.push_back(x);
      if (coin(rng)) p.quads.push_back(x);  // duplicates must not count twice
    }
    const int invented = static_cast<int>(rng() % 3);
    for (int k = 0; k < invented; ++k) {
      p.quads.push_back(Quadruple{random_span(SpanKind::kTarget), random_span(SpanKind::kAspect),
                                  random_span(SpanKind::kOpinion),
                                  static_cast<Polarity>(rng() % 3)});
    }
    if (coin(rng)) {
      std::array<std::vector<Span>, 3> spans;
      for (int k = 0; k < 3; ++k) {
        for (const Span& s : d.spans(static_cast<SpanKind>(k))) {
          if (coin(rng)) spans[k].push_back(s);
        }
        if (coin(rng)) spans[k].push_back(random_span(static_cast<SpanKind>(k)));
      }
      p.spans = std::move(spans);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace diaasq::testing
