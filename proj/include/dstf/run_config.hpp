#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dstf/config.hpp"
#include "dstf/trainer.hpp"
#include "json.hpp"

namespace dstf {

struct DataSettings {
  std::filesystem::path train;
  std::filesystem::path val;        // optional; otherwise split from `train`
  double val_fraction = 0.1;
  std::filesystem::path tokenizer;  // BPE vocab JSON; empty selects byte level
};

// Everything a training run needs. Text form: one `dotted.key = value` per
// line, `#` starts a comment.
struct RunConfig {
  ModelConfig model;
  TrainSettings train;
  DataSettings data;
  std::filesystem::path out_dir = "runs/default";

  // Throws ConfigError naming the key for unknown keys or unparsable values.
  void set(std::string_view key, std::string_view value);
  // Resolves defaults that depend on other keys and validates the result.
  void finalize();

  nlohmann::json to_json() const;

 private:
  bool max_seq_len_set_ = false;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// `source` names the file in error messages.
KeyValues parse_key_values(std::string_view text, const std::string& source = "<config>");

// Defaults, then file values, then overrides ("key=value" pairs), then finalize().
RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides = {});
RunConfig make_run_config(const KeyValues& values);

}  // namespace dstf
