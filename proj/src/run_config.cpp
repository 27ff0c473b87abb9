#include "dstf/run_config.hpp"

#include <charconv>
#include <fstream>
#include <iterator>

#include "dstf/errors.hpp"

namespace dstf {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(std::string(key) + ": expected an unsigned integer, got '" + std::string(v) + "'");
  }
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  auto& m = model;
  auto& t = train;
  try {
    if (key == "model.d_model") m.d_model = to_size(key, v);
    else if (key == "model.n_layers") m.n_layers = to_size(key, v);
    else if (key == "model.n_heads") m.n_heads = to_size(key, v);
    else if (key == "model.d_ff") m.d_ff = to_size(key, v);
    else if (key == "model.vocab_size") m.vocab_size = to_size(key, v);
    else if (key == "model.max_seq_len") {
      m.max_seq_len = to_size(key, v);
      max_seq_len_set_ = true;
    }
    else if (key == "model.mode") m.stream_mode = parse_stream_mode(v);
    else if (key == "model.mixing") m.signature = parse_signature(v);
    else if (key == "model.gated") m.gated = to_bool(key, v);
    else if (key == "model.tie_embeddings") m.tie_embeddings = to_bool(key, v);
    else if (key == "model.position_embedding") m.position_embedding = to_bool(key, v);
    else if (key == "model.mixing_bias") m.mixing_bias = to_bool(key, v);
    else if (key == "model.init_std") m.init_std = to_double(key, v);
    else if (key == "supervision.enabled") m.supervision.enabled = to_bool(key, v);
    else if (key == "supervision.lambda") m.supervision.lambda = to_double(key, v);
    else if (key == "supervision.schedule") m.supervision.schedule = parse_schedule(v);
    else if (key == "train.steps") t.steps = to_size(key, v);
    else if (key == "train.batch_size") t.batch_size = to_size(key, v);
    else if (key == "train.seq_len") t.seq_len = to_size(key, v);
    else if (key == "train.lr") t.schedule.base_lr = to_double(key, v);
    else if (key == "train.lr_floor") t.schedule.floor_lr = to_double(key, v);
    else if (key == "train.warmup") t.schedule.warmup = to_size(key, v);
    else if (key == "train.beta1") t.adam.beta1 = to_double(key, v);
    else if (key == "train.beta2") t.adam.beta2 = to_double(key, v);
    else if (key == "train.eps") t.adam.eps = to_double(key, v);
    else if (key == "train.weight_decay") t.adam.weight_decay = to_double(key, v);
    else if (key == "train.grad_clip") t.grad_clip = to_double(key, v);
    else if (key == "train.grad_accum") t.grad_accum = to_size(key, v);
    else if (key == "train.eval_every") t.eval_every = to_size(key, v);
    else if (key == "train.eval_batch_size") t.eval_batch_size = to_size(key, v);
    else if (key == "train.checkpoint_every") t.checkpoint_every = to_size(key, v);
    else if (key == "data.train") data.train = std::string(v);
    else if (key == "data.val") data.val = std::string(v);
    else if (key == "data.val_fraction") data.val_fraction = to_double(key, v);
    else if (key == "data.tokenizer") data.tokenizer = std::string(v);
    else if (key == "output.dir") out_dir = std::string(v);
    else if (key == "seed") {
      m.seed = to_u64(key, v);
      t.seed = m.seed;
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(std::string(key), 0) == 0 || msg.rfind("unknown config key", 0) == 0) throw;
    throw ConfigError(std::string(key) + ": " + msg);
  }
}

void RunConfig::finalize() {
  if (!max_seq_len_set_) model.max_seq_len = train.seq_len;
  train.schedule.total = train.steps;
  if (model.supervision.lambda < 0.0) throw ConfigError("supervision.lambda must be >= 0");
  model.validate();
  train.validate();
  if (train.seq_len > model.max_seq_len) {
    throw ConfigError("train.seq_len (" + std::to_string(train.seq_len) + ") exceeds model.max_seq_len (" +
                      std::to_string(model.max_seq_len) + ")");
  }
}

nlohmann::json RunConfig::to_json() const {
  return {{"model", model.to_json()},
          {"train", train.to_json()},
          {"data",
           {{"train", data.train.string()},
            {"val", data.val.string()},
            {"val_fraction", data.val_fraction},
            {"tokenizer", data.tokenizer.string()}}},
          {"output", {{"dir", out_dir.string()}}}};
}

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues out;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
    if (end == text.size()) break;
  }
  return out;
}

RunConfig make_run_config(const KeyValues& values) {
  RunConfig cfg;
  for (const auto& [k, v] : values) cfg.set(k, v);
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const KeyValues& overrides) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  KeyValues values = parse_key_values(text, path.string());
  values.insert(values.end(), overrides.begin(), overrides.end());
  return make_run_config(values);
}

}  // namespace dstf
