#ifndef DIAASQ_CONFIG_H_
#define DIAASQ_CONFIG_H_

#include <string>
#include <string_view>
#include <vector>

#include "diaasq/scorer.h"
#include "diaasq/train.h"
#include "json.hpp"

namespace diaasq {

// Every setting a command can take. The text form is one `key = value` per
// line; `#` starts a comment, blank lines are ignored and list values are
// comma separated (`alpha_ent = 1, 5, 5, 5`).
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_path;
  std::string dev_path;
  std::string out_dir;
  std::string embeddings_path;

  // Recognized keys in serialization order.
  static const std::vector<std::string>& Keys();

  // Throws ConfigError on an unknown key or an unparsable value.
  void Set(std::string_view key, std::string_view value);
  std::string Get(std::string_view key) const;

  // `source` names the input in error messages.
  static RunConfig Parse(std::string_view text, const std::string& source = "config");
  static RunConfig Load(const std::string& path);  // IoError, ConfigError

  void Validate() const;
  std::string Serialize() const;
  nlohmann::json ToJson() const;
};

}  // namespace diaasq

#endif  // DIAASQ_CONFIG_H_
