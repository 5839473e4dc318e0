#include "diaasq/scorer.h"

#include <cmath>

#include "diaasq/error.h"

namespace diaasq {

using ad::Matrix;
using ad::Var;
using nlohmann::json;

std::string_view EmbeddingSourceName(EmbeddingSource source) {
  return source == EmbeddingSource::kTrainable ? "trainable" : "external";
}

EmbeddingSource ParseEmbeddingSource(std::string_view text) {
  if (text == "trainable") return EmbeddingSource::kTrainable;
  if (text == "external" || text == "external-frozen") return EmbeddingSource::kExternal;
  throw ConfigError("embedding_source must be \"trainable\" or \"external\", got \"" +
                    std::string(text) + "\"");
}

void ModelConfig::Validate() const {
  if (d_model <= 0 || d_model % 2 != 0) {
    throw ConfigError("d_model must be a positive even number");
  }
  if (n_heads <= 0 || d_model % n_heads != 0) {
    throw ConfigError("n_heads must divide d_model");
  }
  if (base_layers < 0) throw ConfigError("base_layers must be >= 0");
  if (ffn_dim <= 0) throw ConfigError("ffn_dim must be positive");
  if (tag_dim <= 0 || tag_dim % 2 != 0) {
    throw ConfigError("tag_dim must be a positive even number");
  }
  if (!(rope_theta > 0.0)) throw ConfigError("rope_theta must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

json ModelConfig::ToJson() const {
  return {{"d_model", d_model},         {"n_heads", n_heads},
          {"base_layers", base_layers}, {"ffn_dim", ffn_dim},
          {"tag_dim", tag_dim},         {"rope_theta", rope_theta},
          {"dropout", dropout},
          {"embedding_source", EmbeddingSourceName(embedding_source)}};
}

ModelConfig ModelConfig::FromJson(const json& raw) {
  ModelConfig c;
  c.d_model = raw.at("d_model").get<int>();
  c.n_heads = raw.at("n_heads").get<int>();
  c.base_layers = raw.at("base_layers").get<int>();
  c.ffn_dim = raw.at("ffn_dim").get<int>();
  c.tag_dim = raw.at("tag_dim").get<int>();
  c.rope_theta = raw.at("rope_theta").get<double>();
  c.dropout = raw.at("dropout").get<double>();
  c.embedding_source = ParseEmbeddingSource(raw.at("embedding_source").get<std::string>());
  c.Validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

void ScorerParams::Add(std::string name, Matrix value, ParamGroup group, bool decay) {
  index_.emplace(name, static_cast<int>(tensors_.size()));
  tensors_.push_back(NamedTensor{std::move(name), std::move(value), group, decay});
}

int ScorerParams::Index(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + std::string(name));
  return it->second;
}

const Matrix& ScorerParams::Get(std::string_view name) const {
  return tensors_[Index(name)].value;
}

Matrix& ScorerParams::Get(std::string_view name) { return tensors_[Index(name)].value; }

Gradients ScorerParams::ZeroGradients() const {
  Gradients g;
  g.reserve(tensors_.size());
  for (const NamedTensor& t : tensors_) {
    g.push_back(Matrix::Zero(t.value.rows(), t.value.cols()));
  }
  return g;
}

namespace {

Matrix Xavier(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

void AddLinear(ScorerParams& p, const std::string& prefix, int in, int out,
               ParamGroup group, std::mt19937_64& rng) {
  p.Add(prefix + ".weight", Xavier(in, out, rng), group, true);
  p.Add(prefix + ".bias", Matrix::Zero(1, out), group, false);
}

void AddLayerNorm(ScorerParams& p, const std::string& prefix, int width, ParamGroup group) {
  p.Add(prefix + ".gain", Matrix::Ones(1, width), group, false);
  p.Add(prefix + ".bias", Matrix::Zero(1, width), group, false);
}

void AddAttention(ScorerParams& p, const std::string& prefix, int d, ParamGroup group,
                  std::mt19937_64& rng) {
  for (const char* part : {"q", "k", "v", "o"}) {
    AddLinear(p, prefix + "." + part, d, d, group, rng);
  }
}

}  // namespace

ScorerParams ScorerParams::Init(const ModelConfig& config, int vocab_size, uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  ScorerParams p;
  const int d = config.d_model;
  if (config.embedding_source == EmbeddingSource::kTrainable) {
    if (vocab_size <= 0) throw ConfigError("trainable embeddings need a vocabulary");
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    Matrix table(vocab_size, d);
    for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
    table.row(Vocabulary::kPad).setZero();
    p.Add("embed.table", std::move(table), ParamGroup::kEncoder, false);
    Matrix sentinel(2, d);
    for (Eigen::Index i = 0; i < sentinel.size(); ++i) sentinel.data()[i] = normal(rng);
    p.Add("embed.sentinel", std::move(sentinel), ParamGroup::kEncoder, false);
    for (int l = 0; l < config.base_layers; ++l) {
      const std::string prefix = "base." + std::to_string(l);
      AddAttention(p, prefix + ".attn", d, ParamGroup::kEncoder, rng);
      AddLayerNorm(p, prefix + ".ln1", d, ParamGroup::kEncoder);
      AddLinear(p, prefix + ".ffn.in", d, config.ffn_dim, ParamGroup::kEncoder, rng);
      AddLinear(p, prefix + ".ffn.out", config.ffn_dim, d, ParamGroup::kEncoder, rng);
      AddLayerNorm(p, prefix + ".ln2", d, ParamGroup::kEncoder);
    }
  }
  for (std::string_view view : kViewNames) {
    AddAttention(p, "view." + std::string(view), d, ParamGroup::kHead, rng);
  }
  for (GridKind kind : kGridKinds) {
    for (const char* side : {".query", ".key"}) {
      AddLinear(p, "tag." + std::string(GridName(kind)) + side, d,
                NumLabels(kind) * config.tag_dim, ParamGroup::kHead, rng);
    }
  }
  return p;
}

ParamBinder::ParamBinder(ad::Tape& tape, const ScorerParams& params, Gradients* grads)
    : tape_(tape), params_(params), grads_(grads), vars_(params.size(), -1) {}

Var ParamBinder::operator()(std::string_view name) {
  const int idx = params_.Index(name);
  if (vars_[idx] < 0) {
    Matrix* grad = grads_ != nullptr ? &(*grads_)[idx] : nullptr;
    vars_[idx] = tape_.Parameter(params_.tensors()[idx].value, grad).id;
  }
  return Var{vars_[idx]};
}

// ---------------------------------------------------------------------------
// Forward stages

namespace {

Var Linear(ad::Tape& tape, ParamBinder& bind, Var x, const std::string& prefix) {
  return tape.AddRow(tape.MatMul(x, bind(prefix + ".weight")), bind(prefix + ".bias"));
}

Var SelfAttention(ad::Tape& tape, ParamBinder& bind, Var x, const std::string& prefix,
                  int heads, const BoolMatrix* mask) {
  Var q = Linear(tape, bind, x, prefix + ".q");
  Var k = Linear(tape, bind, x, prefix + ".k");
  Var v = Linear(tape, bind, x, prefix + ".v");
  return Linear(tape, bind, tape.Attention(q, k, v, heads, mask), prefix + ".o");
}

Var EncoderBlock(ad::Tape& tape, ParamBinder& bind, Var x, const std::string& prefix,
                 int heads) {
  Var attn = SelfAttention(tape, bind, x, prefix + ".attn", heads, nullptr);
  Var x1 = tape.LayerNorm(tape.Add(x, attn), bind(prefix + ".ln1.gain"),
                          bind(prefix + ".ln1.bias"));
  Var ffn = Linear(tape, bind, tape.Gelu(Linear(tape, bind, x1, prefix + ".ffn.in")),
                   prefix + ".ffn.out");
  return tape.LayerNorm(tape.Add(x1, ffn), bind(prefix + ".ln2.gain"),
                        bind(prefix + ".ln2.bias"));
}

Matrix SinusoidalPositions(int length, int d) {
  Matrix pe(length, d);
  for (int pos = 0; pos < length; ++pos) {
    for (int k = 0; k < d / 2; ++k) {
      const double angle = pos * std::pow(10000.0, -2.0 * k / d);
      pe(pos, 2 * k) = std::sin(angle);
      pe(pos, 2 * k + 1) = std::cos(angle);
    }
  }
  return pe;
}

}  // namespace

Var EmbedDialogue(ad::Tape& tape, ParamBinder& bind, const DialogueInput& input,
                  const ModelConfig& config, const DropoutSpec* dropout) {
  const Dialogue& d = *input.dialogue;
  if (d.num_tokens() == 0) throw ShapeError("dialogue " + d.id + " has no tokens");
  Var h;
  if (config.embedding_source == EmbeddingSource::kExternal) {
    if (input.external == nullptr) {
      throw DataError(d.id, "embeddings", "missing external embeddings");
    }
    if (input.external->rows() != d.num_tokens() || input.external->cols() != config.d_model) {
      throw DataError(d.id, "embeddings",
                      "embedding block is " + std::to_string(input.external->rows()) + "x" +
                          std::to_string(input.external->cols()) + ", expected " +
                          std::to_string(d.num_tokens()) + "x" +
                          std::to_string(config.d_model));
    }
    h = tape.Constant(*input.external);
  } else {
    if (static_cast<int>(input.token_ids.size()) != d.num_tokens()) {
      throw ShapeError("token id count does not match dialogue length");
    }
    Var table = bind("embed.table");
    std::vector<Var> parts;
    parts.reserve(d.utterances.size());
    for (const Utterance& u : d.utterances) {
      std::span<const int> ids(input.token_ids.data() + u.begin, u.size());
      if (config.base_layers == 0) {
        parts.push_back(tape.Gather(table, ids));
        continue;
      }
      Var sentinel = bind("embed.sentinel");
      const int cls = 0, sep = 1;
      std::array<Var, 3> framed = {tape.Gather(sentinel, std::span<const int>(&cls, 1)),
                                   tape.Gather(table, ids),
                                   tape.Gather(sentinel, std::span<const int>(&sep, 1))};
      Var x = tape.ConcatRows(framed);
      x = tape.Add(x, tape.Constant(SinusoidalPositions(u.size() + 2, config.d_model)));
      for (int l = 0; l < config.base_layers; ++l) {
        x = EncoderBlock(tape, bind, x, "base." + std::to_string(l), config.n_heads);
      }
      parts.push_back(tape.SliceRows(x, 1, u.size()));
    }
    h = tape.ConcatRows(parts);
  }
  if (dropout != nullptr && dropout->rate > 0.0) {
    const Matrix& v = tape.value(h);
    std::mt19937_64 rng(dropout->seed);
    std::bernoulli_distribution keep(1.0 - dropout->rate);
    const double scale = 1.0 / (1.0 - dropout->rate);
    Matrix mask(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
    h = tape.MulConstant(h, mask);
  }
  return h;
}

Var MultiViewAttention(ad::Tape& tape, ParamBinder& bind, Var h, const MaskSet& masks,
                       const ModelConfig& config, std::array<Var, 3>* views) {
  const std::array<const BoolMatrix*, 3> view_masks = {&masks.thread, &masks.speaker,
                                                       &masks.reply};
  std::array<Var, 3> outs;
  for (int c = 0; c < 3; ++c) {
    outs[c] = SelfAttention(tape, bind, h, "view." + std::string(kViewNames[c]),
                            config.n_heads, view_masks[c]);
  }
  if (views != nullptr) *views = outs;
  return tape.Max(outs);
}

TagProjections TagProjection(ad::Tape& tape, ParamBinder& bind, Var fused) {
  TagProjections out;
  for (GridKind kind : kGridKinds) {
    const std::string prefix = "tag." + std::string(GridName(kind));
    out.queries[static_cast<int>(kind)] = Linear(tape, bind, fused, prefix + ".query");
    out.keys[static_cast<int>(kind)] = Linear(tape, bind, fused, prefix + ".key");
  }
  return out;
}

std::array<Var, 3> ScoreCells(ad::Tape& tape, const TagProjections& projected,
                              const ad::RotaryTable& rotary) {
  std::array<Var, 3> out;
  for (GridKind kind : kGridKinds) {
    const int k = static_cast<int>(kind);
    out[k] = tape.RotaryScores(projected.queries[k], projected.keys[k], NumLabels(kind), rotary);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scorer

Scorer::Scorer(ModelConfig config, ScorerParams params)
    : config_(config), params_(std::move(params)) {
  config_.Validate();
}

std::unique_ptr<ForwardGraph> Scorer::Build(const DialogueInput& input, Gradients* grads,
                                            const DropoutSpec* dropout) const {
  if (input.dialogue == nullptr) throw ShapeError("forward: no dialogue");
  auto g = std::make_unique<ForwardGraph>();
  ParamBinder bind(g->tape, params_, grads);
  g->base = EmbedDialogue(g->tape, bind, input, config_, dropout);
  g->fused = MultiViewAttention(g->tape, bind, g->base, input.structure.masks, config_, &g->views);
  const TagProjections projected = TagProjection(g->tape, bind, g->fused);
  g->queries = projected.queries;
  g->keys = projected.keys;
  g->rotary = std::make_unique<ad::RotaryTable>(input.structure.positions.delta,
                                                config_.tag_dim, config_.rope_theta);
  g->logits = ScoreCells(g->tape, projected, *g->rotary);
  return g;
}

ScoreGrids CollectGrids(const ForwardGraph& graph, int n) {
  ScoreGrids out;
  out.n = n;
  for (int k = 0; k < 3; ++k) {
    out.logits[k] = graph.tape.value(graph.logits[k]);
    Matrix& p = out.probs[k];
    p = out.logits[k];
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double mx = p.row(r).maxCoeff();
      p.row(r) = (p.row(r).array() - mx).exp();
      p.row(r) /= p.row(r).sum();
    }
  }
  return out;
}

ScoreGrids Scorer::Forward(const DialogueInput& input) const {
  auto graph = Build(input, nullptr, nullptr);
  return CollectGrids(*graph, input.dialogue->num_tokens());
}

LabelGrid ScoreGrids::Argmax() const {
  LabelGrid g = LabelGrid::Empty(n);
  for (GridKind kind : kGridKinds) {
    const Matrix& m = logits_of(kind);
    IntMatrix& out = g.matrix(kind);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Eigen::Index best = 0;
        m.row(static_cast<Eigen::Index>(i) * n + j).maxCoeff(&best);
        out(i, j) = static_cast<int>(best);
      }
    }
  }
  return g;
}

}  // namespace diaasq
