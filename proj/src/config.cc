#include "diaasq/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "diaasq/error.h"

namespace diaasq {

namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void Bad(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("bad value \"" + std::string(value) + "\" for " + std::string(key) +
                    ": expected " + expected);
}

template <typename T>
T ParseNumber(std::string_view key, std::string_view value) {
  value = Trim(value);
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    Bad(key, value, std::is_floating_point_v<T> ? "a number" : "an integer");
  }
  return out;
}

bool ParseBool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  Bad(key, value, "true or false");
}

std::vector<double> ParseList(std::string_view key, std::string_view value) {
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= value.size()) {
    const size_t comma = value.find(',', pos);
    const std::string_view item =
        value.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    out.push_back(ParseNumber<double>(key, item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string FormatDouble(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string FormatList(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += FormatDouble(v[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field IntField(T RunConfig::*group, int T::*member) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            (c.*group).*member = ParseNumber<int>(k, v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field RealField(T RunConfig::*group, double T::*member) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            (c.*group).*member = ParseNumber<double>(k, v);
          },
          [=](const RunConfig& c) { return FormatDouble((c.*group).*member); }};
}

Field ListField(std::vector<double> TrainConfig::*member) {
  return {[=](RunConfig& c, std::string_view k, std::string_view v) {
            c.train.*member = ParseList(k, v);
          },
          [=](const RunConfig& c) { return FormatList(c.train.*member); }};
}

Field PathField(std::string RunConfig::*member) {
  return {[=](RunConfig& c, std::string_view, std::string_view v) { c.*member = v; },
          [=](const RunConfig& c) { return c.*member; }};
}

const std::vector<std::pair<std::string, Field>>& Fields() {
  static const std::vector<std::pair<std::string, Field>> fields = [] {
    using M = ModelConfig;
    using T = TrainConfig;
    std::vector<std::pair<std::string, Field>> f;
    f.emplace_back("d_model", IntField(&RunConfig::model, &M::d_model));
    f.emplace_back("n_heads", IntField(&RunConfig::model, &M::n_heads));
    f.emplace_back("base_layers", IntField(&RunConfig::model, &M::base_layers));
    f.emplace_back("ffn_dim", IntField(&RunConfig::model, &M::ffn_dim));
    f.emplace_back("tag_dim", IntField(&RunConfig::model, &M::tag_dim));
    f.emplace_back("rope_theta", RealField(&RunConfig::model, &M::rope_theta));
    f.emplace_back("dropout", RealField(&RunConfig::model, &M::dropout));
    f.emplace_back("embedding_source",
                   Field{[](RunConfig& c, std::string_view, std::string_view v) {
                           c.model.embedding_source = ParseEmbeddingSource(v);
                         },
                         [](const RunConfig& c) {
                           return std::string(EmbeddingSourceName(c.model.embedding_source));
                         }});
    f.emplace_back("alpha_ent", ListField(&T::alpha_ent));
    f.emplace_back("alpha_pair", ListField(&T::alpha_pair));
    f.emplace_back("alpha_pol", ListField(&T::alpha_pol));
    f.emplace_back("beta", RealField(&RunConfig::train, &T::beta));
    f.emplace_back("eta", RealField(&RunConfig::train, &T::eta));
    f.emplace_back("lr_head", RealField(&RunConfig::train, &T::lr_head));
    f.emplace_back("lr_encoder", RealField(&RunConfig::train, &T::lr_encoder));
    f.emplace_back("split_learning_rates",
                   Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                           c.train.split_learning_rates = ParseBool(k, v);
                         },
                         [](const RunConfig& c) {
                           return std::string(c.train.split_learning_rates ? "true" : "false");
                         }});
    f.emplace_back("batch_size", IntField(&RunConfig::train, &T::batch_size));
    f.emplace_back("epochs", IntField(&RunConfig::train, &T::epochs));
    f.emplace_back("max_grad_norm", RealField(&RunConfig::train, &T::max_grad_norm));
    f.emplace_back("weight_decay", RealField(&RunConfig::train, &T::weight_decay));
    f.emplace_back("adam_beta1", RealField(&RunConfig::train, &T::adam_beta1));
    f.emplace_back("adam_beta2", RealField(&RunConfig::train, &T::adam_beta2));
    f.emplace_back("adam_eps", RealField(&RunConfig::train, &T::adam_eps));
    f.emplace_back("seed", Field{[](RunConfig& c, std::string_view k, std::string_view v) {
                                  c.train.seed = ParseNumber<uint64_t>(k, v);
                                },
                                [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    f.emplace_back("threads", IntField(&RunConfig::train, &T::threads));
    f.emplace_back("pair_mode",
                   Field{[](RunConfig& c, std::string_view, std::string_view v) {
                           c.train.decode.pair_mode = ParsePairMode(v);
                         },
                         [](const RunConfig& c) {
                           return std::string(PairModeName(c.train.decode.pair_mode));
                         }});
    f.emplace_back("train", PathField(&RunConfig::train_path));
    f.emplace_back("dev", PathField(&RunConfig::dev_path));
    f.emplace_back("out", PathField(&RunConfig::out_dir));
    f.emplace_back("embeddings", PathField(&RunConfig::embeddings_path));
    return f;
  }();
  return fields;
}

const Field& Lookup(std::string_view key) {
  for (const auto& [name, field] : Fields()) {
    if (name == key) return field;
  }
  throw ConfigError("unknown config key \"" + std::string(key) + "\"");
}

}  // namespace

const std::vector<std::string>& RunConfig::Keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : Fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void RunConfig::Set(std::string_view key, std::string_view value) {
  Lookup(key).set(*this, key, Trim(value));
}

std::string RunConfig::Get(std::string_view key) const { return Lookup(key).get(*this); }

RunConfig RunConfig::Parse(std::string_view text, const std::string& source) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = Trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    const std::string where = source + ":" + std::to_string(number) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    try {
      config.Set(Trim(view.substr(0, eq)), view.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig RunConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return Parse(text.str(), path);
}

void RunConfig::Validate() const {
  model.Validate();
  train.Validate();
}

std::string RunConfig::Serialize() const {
  std::string out;
  for (const auto& [name, field] : Fields()) out += name + " = " + field.get(*this) + "\n";
  return out;
}

nlohmann::json RunConfig::ToJson() const {
  return {{"model", model.ToJson()},
          {"train", train.ToJson()},
          {"paths",
           {{"train", train_path},
            {"dev", dev_path},
            {"out", out_dir},
            {"embeddings", embeddings_path}}}};
}

}  // namespace diaasq
