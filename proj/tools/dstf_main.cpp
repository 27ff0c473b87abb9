#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dstf/bpe.hpp"
#include "dstf/checkpoint.hpp"
#include "dstf/dataset.hpp"
#include "dstf/diag.hpp"
#include "dstf/errors.hpp"
#include "dstf/mixing.hpp"
#include "dstf/model.hpp"
#include "dstf/run_config.hpp"
#include "dstf/trainer.hpp"

namespace fs = std::filesystem;
using namespace dstf;

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("DSTF_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("DSTF_SEED: expected an unsigned integer, got '") + env + "'");
    }
  }
  return 0;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  return os;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// A loaded checkpoint with everything the evaluation commands need.
struct Loaded {
  fs::path path;
  CheckpointData data;
  DualStreamModel<float> model;
  BpeTokenizer tokenizer;
  std::string hash;
  std::size_t seq_len = 0;
  double val_fraction = 0.1;
  std::size_t eval_batch_size = 16;

  std::string header() const {
    const auto& c = model.config();
    return "signature=" + format_signature(c.signature) + " mode=" + std::string(stream_mode_token(c.stream_mode)) +
           " ckpt=" + hash;
  }
};

Loaded load(const fs::path& path) {
  CheckpointData data = load_checkpoint(path);
  auto model = model_from_checkpoint<float>(data);
  BpeTokenizer tok = data.meta.contains("tokenizer") ? BpeTokenizer::from_json(data.meta.at("tokenizer"))
                                                     : BpeTokenizer();
  Loaded out{path, std::move(data), std::move(model), std::move(tok), checkpoint_hash(path)};
  out.seq_len = out.model.config().max_seq_len;
  if (out.data.meta.contains("train")) {
    const auto s = TrainSettings::from_json(out.data.meta.at("train"));
    out.seq_len = s.seq_len;
    out.eval_batch_size = s.eval_batch_size;
  }
  if (out.data.meta.contains("run")) {
    out.val_fraction = out.data.meta.at("run").at("data").value("val_fraction", 0.1);
  }
  if (out.tokenizer.vocab_size() != out.model.config().vocab_size) {
    throw DataError(path.string() + ": tokenizer has " + std::to_string(out.tokenizer.vocab_size()) +
                    " ids but the model expects " + std::to_string(out.model.config().vocab_size));
  }
  return out;
}

// --split all|train|val selects documents the way training split them.
Dataset eval_data(const Loaded& ck, const fs::path& path, const std::string& split) {
  Corpus corpus = load_corpus(path);
  if (split == "train" || split == "val") {
    auto parts = split_corpus(corpus, ck.val_fraction);
    corpus = split == "val" ? std::move(parts.second) : std::move(parts.first);
  } else if (split != "all") {
    throw ConfigError("--split: expected all, train or val, got '" + split + "'");
  }
  Dataset ds(corpus, ck.tokenizer, ck.seq_len);
  if (ds.empty()) throw DataError(path.string() + ": no evaluation windows");
  return ds;
}

fs::path output_dir(const std::string& out, const fs::path& ckpt) {
  if (!out.empty()) return out;
  return ckpt.has_parent_path() ? ckpt.parent_path() : fs::path(".");
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--alphas: cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw ConfigError("--alphas: no values given");
  return out;
}

int cmd_bpe_train(const std::string& corpus_path, std::size_t vocab_size, const fs::path& out) {
  const std::string text = read_file(corpus_path);
  const auto tok = BpeTokenizer::train(text, vocab_size);
  tok.save(out);
  std::cout << "trained " << tok.merges().size() << " merges, vocab size " << tok.vocab_size() << " -> "
            << out.string() << '\n';
  return 0;
}

struct TrainFlags {
  std::string config;
  std::string mixing;
  std::string mode;
  bool gated = false;
  std::string supervision;
  std::optional<double> lambda;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::size_t log_every = 50;
};

int cmd_train(const TrainFlags& f) {
  KeyValues overrides;
  // DSTF_SEED is only a default: a seed in the config file wins over it.
  const auto file_values = parse_key_values(read_file(f.config), f.config);
  const bool file_seed =
      std::any_of(file_values.begin(), file_values.end(), [](const auto& kv) { return kv.first == "seed"; });
  if (!file_seed) overrides.emplace_back("seed", std::to_string(default_seed()));
  if (!f.mixing.empty()) overrides.emplace_back("model.mixing", f.mixing);
  if (!f.mode.empty()) overrides.emplace_back("model.mode", f.mode);
  if (f.gated) overrides.emplace_back("model.gated", "true");
  if (!f.supervision.empty()) {
    if (f.supervision == "off") {
      overrides.emplace_back("supervision.enabled", "false");
    } else {
      overrides.emplace_back("supervision.enabled", "true");
      overrides.emplace_back("supervision.schedule", f.supervision);
    }
  }
  if (f.lambda) overrides.emplace_back("supervision.lambda", std::to_string(*f.lambda));
  if (f.steps) overrides.emplace_back("train.steps", std::to_string(*f.steps));
  if (f.seed) overrides.emplace_back("seed", std::to_string(*f.seed));
  if (!f.out.empty()) overrides.emplace_back("output.dir", f.out);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set: expected key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  RunConfig cfg = load_run_config(f.config, overrides);
  if (cfg.data.train.empty()) throw ConfigError("data.train: no training corpus configured");

  const BpeTokenizer tok = cfg.data.tokenizer.empty() ? BpeTokenizer() : BpeTokenizer::load(cfg.data.tokenizer);
  if (cfg.model.vocab_size != tok.vocab_size()) {
    std::cout << "model.vocab_size set to " << tok.vocab_size() << " to match the tokenizer\n";
    cfg.model.vocab_size = tok.vocab_size();
    cfg.finalize();
  }
  const Corpus corpus = load_corpus(cfg.data.train);
  Corpus train_docs, val_docs;
  if (!cfg.data.val.empty()) {
    train_docs = corpus;
    val_docs = load_corpus(cfg.data.val);
  } else {
    std::tie(train_docs, val_docs) = split_corpus(corpus, cfg.data.val_fraction);
  }
  const Dataset train(train_docs, tok, cfg.train.seq_len);
  const Dataset val(val_docs, tok, cfg.train.seq_len);

  DualStreamModel<float> model(cfg.model);
  const auto census = param_census(model);
  std::cout << "model " << format_signature(cfg.model.signature) << " mode=" << stream_mode_token(cfg.model.stream_mode)
            << " params=" << census.total << " train_windows=" << train.size() << " val_windows=" << val.size()
            << '\n';

  const nlohmann::json meta = {{"run", cfg.to_json()}, {"tokenizer", tok.to_json()}};
  TrainHooks hooks;
  hooks.on_record = [&](const StepRecord& r) {
    if (r.step == 1 || r.step % f.log_every == 0 || r.val_loss) {
      std::cout << "step " << r.step << " loss " << fmt(r.loss, "%.4f") << " lr " << fmt(r.lr, "%.3e") << " gnorm "
                << fmt(r.grad_norm, "%.3f") << " tok/s " << fmt(r.tokens_per_s, "%.0f");
      if (r.val_loss) std::cout << " val " << fmt(*r.val_loss, "%.4f");
      std::cout << std::endl;
    }
  };
  const auto result = train_loop(model, train, val, cfg.train, cfg.out_dir, meta, hooks);
  std::cout << "val loss " << fmt(result.initial_val_loss, "%.4f") << " -> " << fmt(result.final_val_loss, "%.4f")
            << "; checkpoint " << result.checkpoints.back().string() << '\n';
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const std::string& split, double alpha,
             const std::string& out) {
  const Loaded ck = load(ckpt);
  const Dataset ds = eval_data(ck, data, split);
  const double loss = eval_loss(ck.model, ds, alpha, std::nullopt, ck.eval_batch_size);
  const fs::path path = output_dir(out, ckpt) / "eval.json";
  auto os = open_out(path);
  os << nlohmann::json{{"header", ck.header()}, {"alpha", alpha}, {"loss", loss}, {"data", data.string()},
                       {"split", split}, {"targets", ds.target_count()}}
            .dump(2)
     << '\n';
  std::cout << "loss " << fmt(loss, "%.9g") << " (alpha " << alpha << ", " << ds.target_count() << " targets)\n";
  return 0;
}

int cmd_sweep(const fs::path& ckpt, const fs::path& data, const std::string& split, const std::string& alphas_text,
              const std::string& out, const std::string& dump_attn) {
  const Loaded ck = load(ckpt);
  const Dataset ds = eval_data(ck, data, split);
  const auto alphas = parse_alphas(alphas_text);
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0)) throw ConfigError("--alphas: values must be > 0");
    if (i && !(alphas[i] > alphas[i - 1])) throw ConfigError("--alphas: values must be strictly ascending");
  }
  const auto& cfg = ck.model.config();
  SweepResult sweep;
  std::vector<double> losses;
  nlohmann::json records = nlohmann::json::array();
  for (double a : alphas) {
    EvalOptions opts;
    opts.alpha = a;
    opts.batch_size = ck.eval_batch_size;
    opts.attention_stats = true;
    const auto stats = evaluate(ck.model, ds, opts);
    const auto spec = specialization_from_stats(stats, cfg.n_heads);
    sweep.points.push_back({a, stats.loss});
    losses.push_back(stats.loss);
    DiagnosticRecord rec{format_signature(cfg.signature), std::string(stream_mode_token(cfg.stream_mode)), a,
                         stats.loss, stats.entropy, {}, utc_timestamp()};
    for (const auto& l : spec.layers) rec.hss.push_back(l.hss);
    records.push_back(rec.to_json());
    std::cout << "alpha " << fmt(a, "%g") << " loss " << fmt(stats.loss) << " mean_hss " << fmt(spec.mean_hss, "%.4f")
              << " mean_entropy " << fmt(spec.mean_entropy, "%.4f") << '\n';
  }
  if (alphas.size() >= 2) sweep.auc = trapezoid_auc(alphas, losses);

  const fs::path dir = output_dir(out, ckpt);
  {
    auto os = open_out(dir / "sweep_alpha.csv");
    write_sweep_csv(os, sweep, ck.header());
  }
  {
    auto os = open_out(dir / "sweep_alpha.json");
    nlohmann::json summary = {{"header", ck.header()}, {"auc", nullptr}, {"records", records}};
    if (sweep.auc) summary["auc"] = *sweep.auc;
    os << summary.dump(2) << '\n';
  }
  if (sweep.auc) {
    std::cout << "AUC[" << alphas.front() << ", " << alphas.back() << "] " << fmt(*sweep.auc, "%.4f") << '\n';
  }
  std::size_t rising = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) rising += losses[i] >= losses[i - 1];
  if (losses.size() >= 2) {
    std::cout << "trend: loss non-decreasing on " << rising << " of " << losses.size() - 1 << " alpha steps\n";
  }

  if (!dump_attn.empty()) {
    NoGradGuard no_grad;
    const Batch first = ds.batch(0, 1);
    const std::size_t T = ds.seq_len(), H = cfg.n_heads;
    for (double a : alphas) {
      ForwardOptions fo;
      fo.alpha = a;
      const auto fwd = ck.model.forward(first.inputs, fo);
      for (std::size_t l = 0; l < fwd.trace.layers.size(); ++l) {
        const auto w = fwd.trace.layers[l].attention.weights.data();
        for (std::size_t h = 0; h < H; ++h) {
          std::vector<double> m(w.begin() + static_cast<std::ptrdiff_t>(h * T * T),
                                w.begin() + static_cast<std::ptrdiff_t>((h + 1) * T * T));
          char name[96];
          std::snprintf(name, sizeof name, "attn_alpha%g_layer%zu_head%zu.csv", a, l, h);
          auto os = open_out(fs::path(dump_attn) / name);
          write_attention_csv(os, m, T, T, ck.header() + " alpha=" + fmt(a, "%g"));
        }
      }
    }
    std::cout << "attention maps -> " << dump_attn << '\n';
  }
  std::cout << "wrote " << (dir / "sweep_alpha.csv").string() << " and " << (dir / "sweep_alpha.json").string()
            << '\n';
  return 0;
}

int cmd_ablate(const fs::path& ckpt, const fs::path& data, const std::string& split, std::uint64_t seed,
               const std::string& out) {
  const Loaded ck = load(ckpt);
  const Dataset ds = eval_data(ck, data, split);
  const auto rows = run_ablation_suite(ck.model, ds, seed, ck.eval_batch_size);
  const fs::path path = output_dir(out, ckpt) / "ablation.csv";
  {
    auto os = open_out(path);
    write_ablation_csv(os, rows, ck.header() + " seed=" + std::to_string(seed));
  }
  std::cout << "condition             loss       delta%\n";
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%-20s %9.4f %+10.2f\n", r.condition.c_str(), r.loss, r.delta_pct);
    std::cout << line;
  }
  std::cout << "trend: x_t ablation " << (rows[1].loss > rows[2].loss ? "worse" : "not worse")
            << " than x_e ablation\n";
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_export_routing(const fs::path& ckpt, const std::string& out) {
  const Loaded ck = load(ckpt);
  const fs::path dir = output_dir(out, ckpt);
  const std::size_t H = ck.model.config().n_heads;
  std::size_t written = 0;
  for (std::size_t l = 0; l < ck.model.n_layers(); ++l) {
    const auto& attn = ck.model.attention(l);
    const auto& ffn = ck.model.ffn(l);
    const std::pair<const char*, const MixingLinear<float>*> sites[] = {
        {"attn_v", &attn.v_mix()}, {"attn_o", &attn.o_mix()}, {"ffn_up", &ffn.up_mix()}, {"ffn_down", &ffn.down_mix()}};
    for (const auto& [site, layer] : sites) {
      if (layer->strategy() != MixingStrategy::Kronecker) continue;
      const fs::path path = dir / ("routing_layer" + std::to_string(l) + "_" + site + ".csv");
      auto os = open_out(path);
      write_routing_csv(os, export_kronecker(*layer), H,
                        ck.header() + " layer=" + std::to_string(l) + " site=" + site);
      ++written;
    }
  }
  if (written == 0) {
    throw UsageError("export-routing: " + ckpt.string() + " (" + format_signature(ck.model.config().signature) +
                     ") has no Kronecker mixing sites");
  }
  std::cout << "wrote " << written << " routing matrices to " << dir.string() << '\n';
  return 0;
}

int cmd_specialize(const fs::path& ckpt, const fs::path& data, const std::string& split, double alpha,
                   std::size_t max_batches, const std::string& out) {
  const Loaded ck = load(ckpt);
  const Dataset ds = eval_data(ck, data, split);
  const auto report = head_specialization(ck.model, ds, alpha, ck.eval_batch_size, max_batches);
  const fs::path dir = output_dir(out, ckpt);
  {
    auto os = open_out(dir / "specialization_hss.csv");
    write_hss_csv(os, report, ck.header());
  }
  {
    auto os = open_out(dir / "specialization_entropy.csv");
    write_entropy_csv(os, report, ck.header());
  }
  std::cout << "heads " << ck.model.config().n_heads << "  mean HSS " << fmt(report.mean_hss, "%.4f")
            << "  mean entropy " << fmt(report.mean_entropy, "%.4f") << '\n';
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    std::cout << "layer " << l << " hss " << fmt(report.layers[l].hss, "%.4f") << " entropy";
    for (double e : report.layers[l].entropy) std::cout << ' ' << fmt(e, "%.3f");
    std::cout << '\n';
  }
  std::cout << "wrote " << (dir / "specialization_hss.csv").string() << " and "
            << (dir / "specialization_entropy.csv").string() << '\n';
  return 0;
}

int cmd_generate(const fs::path& ckpt, const std::string& prompt, double alpha, double temp, std::size_t n,
                 std::uint64_t seed) {
  const Loaded ck = load(ckpt);
  const auto ids = ck.tokenizer.encode(prompt);
  const auto gen = ck.model.generate(ids, n, alpha, temp, seed);
  std::cout << prompt << ck.tokenizer.decode(gen) << '\n';
  return 0;
}

int cmd_census(const std::string& config, const std::string& ckpt) {
  std::optional<DualStreamModel<float>> model;
  if (!ckpt.empty()) {
    model.emplace(load(ckpt).model);
  } else {
    model.emplace(load_run_config(config).model);
  }
  const auto census = param_census(*model);
  for (const auto& r : census.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-32s %-16s %12zu %s\n", r.name.c_str(), shape_to_string(r.shape).c_str(),
                  r.count, r.strategy.c_str());
    std::cout << line;
  }
  std::cout << "total " << census.total << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-Stream Transformer: training and diagnostics"};
  app.require_subcommand(1);

  std::string corpus, out, config, ckpt, data, split = "all", prompt, alphas = "1,2,4,8,16", dump_attn;
  std::size_t vocab_size = 0, n = 64, max_batches = 0;
  double alpha = 1.0, temp = 0.0;
  std::uint64_t seed = 0;
  TrainFlags tf;

  auto* bpe = app.add_subcommand("bpe-train", "Train a byte-level BPE vocabulary");
  bpe->add_option("--corpus", corpus, "UTF-8 corpus file")->required();
  bpe->add_option("--vocab-size", vocab_size, "Target vocabulary size (>= 257)")->required();
  bpe->add_option("--out", out, "Output vocab JSON")->required();

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", tf.config, "Run config (dotted key = value)")->required();
  train->add_option("--mixing", tf.mixing, "Mixing signature v-o/up-down, e.g. kron-kron/dns-dns");
  train->add_option("--mode", tf.mode, "Stream mode: ss, tf or fts");
  train->add_flag("--gated", tf.gated, "Enable gated attention");
  train->add_option("--supervision", tf.supervision, "Per-layer supervision: uniform, linear, exponential or off");
  train->add_option("--lambda", tf.lambda, "Per-layer supervision coefficient");
  train->add_option("--steps", tf.steps, "Override train.steps");
  train->add_option("--seed", tf.seed, "Override the seed (default: config, then DSTF_SEED)");
  train->add_option("--out", tf.out, "Override output.dir");
  train->add_option("--set", tf.sets, "Override any config key: key=value (repeatable)");
  train->add_option("--log-every", tf.log_every, "Print every N steps");

  auto add_eval_flags = [&](CLI::App* sub) {
    sub->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    sub->add_option("--data", data, "Evaluation corpus")->required();
    sub->add_option("--split", split, "Documents to use: all, train or val (training split)");
    sub->add_option("--out", out, "Output directory (default: the checkpoint's directory)");
  };
  auto* eval = app.add_subcommand("eval", "Validation loss, optionally amplified");
  add_eval_flags(eval);
  eval->add_option("--alpha", alpha, "Attention amplification factor");

  auto* sweep = app.add_subcommand("sweep-alpha", "Loss versus attention amplification, with AUC");
  add_eval_flags(sweep);
  sweep->add_option("--alphas", alphas, "Comma-separated ascending alphas");
  sweep->add_option("--dump-attn", dump_attn, "Directory for per-alpha attention maps of the first window");

  auto* ablate = app.add_subcommand("ablate", "Stream ablation report");
  add_eval_flags(ablate);
  ablate->add_option("--seed", seed, "Seed for random-vocabulary replacement");

  auto* routing = app.add_subcommand("export-routing", "Write Kronecker routing matrices as CSV");
  routing->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  routing->add_option("--out", out, "Output directory")->required();

  auto* spec = app.add_subcommand("specialize", "Head specialization (HSS) and attention entropy");
  add_eval_flags(spec);
  spec->add_option("--alpha", alpha, "Attention amplification factor");
  spec->add_option("--max-batches", max_batches, "Evaluate at most N batches (0 = all)");

  auto* gen = app.add_subcommand("generate", "Sample a continuation");
  gen->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  gen->add_option("--prompt", prompt, "Prompt text")->required();
  gen->add_option("--alpha", alpha, "Attention amplification factor");
  gen->add_option("--temp", temp, "Sampling temperature (0 = greedy)");
  gen->add_option("--n", n, "Tokens to generate");
  gen->add_option("--seed", seed, "Sampling seed");

  auto* census = app.add_subcommand("census", "Parameter census of a config or checkpoint");
  census->add_option("--config", config, "Run config");
  census->add_option("--ckpt", ckpt, "Checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if ((gen->parsed() && gen->count("--seed") == 0) || (ablate->parsed() && ablate->count("--seed") == 0)) {
      seed = default_seed();
    }
    if (bpe->parsed()) return cmd_bpe_train(corpus, vocab_size, out);
    if (train->parsed()) return cmd_train(tf);
    if (eval->parsed()) return cmd_eval(ckpt, data, split, alpha, out);
    if (sweep->parsed()) return cmd_sweep(ckpt, data, split, alphas, out, dump_attn);
    if (ablate->parsed()) return cmd_ablate(ckpt, data, split, seed, out);
    if (routing->parsed()) return cmd_export_routing(ckpt, out);
    if (spec->parsed()) return cmd_specialize(ckpt, data, split, alpha, max_batches, out);
    if (gen->parsed()) return cmd_generate(ckpt, prompt, alpha, temp, n, seed);
    if (census->parsed()) {
      if (config.empty() == ckpt.empty()) throw ConfigError("census: pass exactly one of --config or --ckpt");
      return cmd_census(config, ckpt);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
