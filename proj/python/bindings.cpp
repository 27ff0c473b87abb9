#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "dstf/bpe.hpp"
#include "dstf/checkpoint.hpp"
#include "dstf/dataset.hpp"
#include "dstf/diag.hpp"
#include "dstf/errors.hpp"
#include "dstf/mixing.hpp"
#include "dstf/model.hpp"
#include "dstf/norm.hpp"
#include "dstf/ops.hpp"
#include "dstf/run_config.hpp"
#include "dstf/trainer.hpp"

namespace py = pybind11;
using namespace dstf;

namespace {

using FloatArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IdArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using Model = DualStreamModel<float>;

Shape shape_of(const py::array& a) {
  Shape s;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) s.push_back(static_cast<std::size_t>(a.shape(i)));
  return s;
}

template <typename Real>
Tensor<Real> to_tensor(const FloatArray& a) {
  const double* p = a.data();
  return Tensor<Real>(shape_of(a), std::vector<Real>(p, p + a.size()));
}

template <typename Real>
py::array_t<double> to_array(const Tensor<Real>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  auto* dst = out.mutable_data();
  const auto src = t.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(src[i]);
  return out;
}

py::array_t<double> to_array(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  py::array_t<double> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

TokenIds to_ids(const IdArray& a) {
  if (a.ndim() == 1) return TokenIds(Shape{1, static_cast<std::size_t>(a.shape(0))}, {a.data(), a.data() + a.size()});
  return TokenIds(shape_of(a), {a.data(), a.data() + a.size()});
}

// Accepts a JSON string or any JSON-serializable Python object.
nlohmann::json to_json(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return nlohmann::json::parse(obj.cast<std::string>());
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Dataset make_dataset(const std::string& text, const BpeTokenizer& tok, std::size_t seq_len) {
  Dataset ds(parse_corpus(text), tok, seq_len);
  if (ds.empty()) throw DataError("text yields no windows");
  return ds;
}

std::optional<AblationSpec> parse_ablation(const std::optional<std::string>& label, std::uint64_t seed) {
  if (!label) return std::nullopt;
  AblationSpec spec;
  spec.seed = seed;
  if (*label == "x_t->0") {
  } else if (*label == "x_e->0") {
    spec.target = AblationTarget::ContextStream;
  } else if (*label == "x_t->random_vocab") {
    spec.mode = AblationMode::RandomVocab;
  } else {
    throw UsageError("ablation: expected x_t->0, x_e->0 or x_t->random_vocab, got '" + *label + "'");
  }
  return spec;
}

py::dict report_dict(const SpecializationReport& r) {
  py::list hss, entropy;
  for (const auto& l : r.layers) {
    hss.append(l.hss);
    entropy.append(py::cast(l.entropy));
  }
  py::dict d;
  d["hss"] = hss;
  d["entropy"] = entropy;
  d["mean_hss"] = r.mean_hss;
  d["mean_entropy"] = r.mean_entropy;
  return d;
}

py::dict train_from_config(const std::filesystem::path& config, const std::map<std::string, std::string>& overrides) {
  KeyValues kv(overrides.begin(), overrides.end());
  RunConfig cfg = load_run_config(config, kv);
  const BpeTokenizer tok =
      cfg.data.tokenizer.empty() ? BpeTokenizer() : BpeTokenizer::load(cfg.data.tokenizer);
  cfg.model.vocab_size = tok.vocab_size();
  cfg.finalize();
  Corpus train_docs = load_corpus(cfg.data.train), val_docs;
  if (cfg.data.val.empty()) {
    std::tie(train_docs, val_docs) = split_corpus(train_docs, cfg.data.val_fraction);
  } else {
    val_docs = load_corpus(cfg.data.val);
  }
  const Dataset train(train_docs, tok, cfg.train.seq_len), val(val_docs, tok, cfg.train.seq_len);
  const nlohmann::json meta = {{"run", cfg.to_json()}, {"tokenizer", tok.to_json()}};
  Model model(cfg.model);
  TrainResult result;
  {
    py::gil_scoped_release release;
    result = train_loop(model, train, val, cfg.train, cfg.out_dir, meta);
  }
  py::list records;
  for (const auto& r : result.records) records.append(from_json(r.to_json()));
  py::dict d;
  d["initial_val_loss"] = result.initial_val_loss;
  d["final_val_loss"] = result.final_val_loss;
  d["records"] = records;
  d["checkpoints"] = py::cast(result.checkpoints);
  d["out_dir"] = cfg.out_dir;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-Stream Transformer engine";

  auto value_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", value_error);
  py::register_exception<DataError>(m, "DataError", PyExc_OSError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ComputationError>(m, "ComputationError", PyExc_ArithmeticError);

  m.def("param_count", [](const std::string& s, std::size_t heads, std::size_t d_in, std::size_t d_out) {
    return param_count(parse_strategy(s), heads, d_in, d_out);
  }, py::arg("strategy"), py::arg("heads"), py::arg("d_in"), py::arg("d_out"));
  m.def("parse_signature", [](const std::string& s) { return format_signature(parse_signature(s)); },
        "Validate a v-o/up-down signature and return its canonical spelling");

  m.def("mix", [](const std::string& strategy, const FloatArray& weight, const FloatArray& x, std::size_t heads,
                  std::size_t d_out) {
    const auto s = parse_strategy(strategy);
    if (x.ndim() < 1 || heads == 0 || x.shape(x.ndim() - 1) % static_cast<py::ssize_t>(heads) != 0) {
      throw DimensionError("mix: last dim of x must be divisible by heads");
    }
    const std::size_t d_in = static_cast<std::size_t>(x.shape(x.ndim() - 1)) / heads;
    MixingLinear<double> layer(s, heads, d_in, d_out ? d_out : d_in);
    if (layer.weight().defined()) {
      if (static_cast<std::size_t>(weight.size()) != layer.weight().numel()) {
        throw DimensionError("mix: weight must hold " + std::to_string(layer.weight().numel()) + " values for shape " +
                             shape_to_string(layer.weight().shape()));
      }
      std::copy(weight.data(), weight.data() + weight.size(), layer.weight().mutable_data().begin());
    }
    NoGradGuard guard;
    return to_array(layer.apply(to_tensor<double>(x)));
  }, py::arg("strategy"), py::arg("weight"), py::arg("x"), py::arg("heads"), py::arg("d_out") = 0,
     "Apply one structured projection to x[..., H*d_in]");

  m.def("channel_layer_norm", [](const FloatArray& x, std::size_t heads, std::optional<FloatArray> gamma,
                                 std::optional<FloatArray> beta) {
    if (x.ndim() < 1) throw DimensionError("channel_layer_norm: x must have rank >= 1");
    auto norm = ChannelLayerNorm<double>::for_width(static_cast<std::size_t>(x.shape(x.ndim() - 1)), heads);
    auto assign = [](Tensor<double>& dst, const std::optional<FloatArray>& src, const char* name) {
      if (!src) return;
      if (static_cast<std::size_t>(src->size()) != dst.numel()) {
        throw DimensionError(std::string("channel_layer_norm: ") + name + " must hold " + std::to_string(dst.numel()) +
                             " values");
      }
      std::copy(src->data(), src->data() + src->size(), dst.mutable_data().begin());
    };
    assign(norm.gamma(), gamma, "gamma");
    assign(norm.beta(), beta, "beta");
    NoGradGuard guard;
    return to_array(norm.forward(to_tensor<double>(x)));
  }, py::arg("x"), py::arg("heads"), py::arg("gamma") = py::none(), py::arg("beta") = py::none());

  m.def("softmax", [](const FloatArray& x, double alpha) {
    NoGradGuard guard;
    return to_array(softmax(to_tensor<double>(x), -1, alpha));
  }, py::arg("x"), py::arg("alpha") = 1.0, "Softmax over the last axis of alpha * x");

  m.def("hss", [](const std::vector<std::vector<double>>& patterns) { return hss(patterns); },
        py::arg("patterns"), "Mean pairwise cosine distance between head patterns");
  m.def("trapezoid_auc", [](const std::vector<double>& x, const std::vector<double>& y) {
    return trapezoid_auc(x, y);
  }, py::arg("x"), py::arg("y"));
  m.def("attention_entropy", [](const FloatArray& weights) {
    return attention_entropy(to_tensor<double>(weights));
  }, py::arg("weights"), "Per-head mean row entropy of [B, H, T, T] causal attention weights");

  py::class_<BpeTokenizer>(m, "Tokenizer")
      .def(py::init<>(), "Byte-level vocabulary: 256 bytes plus end-of-text")
      .def_static("train", [](const std::string& text, std::size_t vocab_size) {
        return BpeTokenizer::train(text, vocab_size);
      }, py::arg("text"), py::arg("vocab_size"), py::call_guard<py::gil_scoped_release>())
      .def_static("load", &BpeTokenizer::load)
      .def("save", &BpeTokenizer::save)
      .def("encode", &BpeTokenizer::encode)
      .def("decode", [](const BpeTokenizer& t, const std::vector<std::int32_t>& ids) {
        return py::bytes(t.decode(ids));
      })
      .def_property_readonly("vocab_size", &BpeTokenizer::vocab_size)
      .def_readonly_static("end_of_text", &BpeTokenizer::kEndOfText)
      .def("to_json", [](const BpeTokenizer& t) { return from_json(t.to_json()); });

  py::class_<Model>(m, "Model")
      .def(py::init([](const py::object& config) { return Model(ModelConfig::from_json(to_json(config))); }),
           py::arg("config"), "Build a model from a config dict or JSON string")
      .def_static("load", [](const std::filesystem::path& path) {
        return model_from_checkpoint<float>(load_checkpoint(path));
      })
      .def("save", [](const Model& model, const std::filesystem::path& path, const py::object& extra) {
        save_checkpoint(path, model, extra.is_none() ? nlohmann::json::object() : to_json(extra));
      }, py::arg("path"), py::arg("extra") = py::none())
      .def_property_readonly("config", [](const Model& model) { return from_json(model.config().to_json()); })
      .def_property_readonly("n_layers", &Model::n_layers)
      .def("forward", [](const Model& model, const IdArray& tokens, double alpha, std::optional<std::string> ablation,
                         std::uint64_t seed) {
        NoGradGuard guard;
        ForwardOptions opts;
        opts.alpha = alpha;
        opts.ablation = parse_ablation(ablation, seed);
        return to_array(model.forward(to_ids(tokens), opts).logits);
      }, py::arg("tokens"), py::arg("alpha") = 1.0, py::arg("ablation") = py::none(), py::arg("seed") = 0,
         "Logits [B, T, V] for token ids [B, T]")
      .def("streams", [](const Model& model, const IdArray& tokens) {
        NoGradGuard guard;
        const auto fwd = model.forward(to_ids(tokens));
        py::list layers;
        for (const auto& lt : fwd.trace.layers) {
          py::dict d;
          d["x_t"] = to_array(lt.output.x_t);
          d["x_e"] = to_array(lt.output.x_e);
          layers.append(d);
        }
        py::dict out;
        out["embedding"] = to_array(fwd.trace.embedding.x_t);
        out["layers"] = layers;
        return out;
      }, py::arg("tokens"), "Token and context streams after every layer")
      .def("loss", [](const Model& model, const IdArray& tokens, const IdArray& targets) {
        NoGradGuard guard;
        return static_cast<double>(model.loss(to_ids(tokens), to_ids(targets)).item());
      }, py::arg("tokens"), py::arg("targets"))
      .def("generate", &Model::generate, py::arg("prompt"), py::arg("n"), py::arg("alpha") = 1.0,
           py::arg("temperature") = 0.0, py::arg("seed") = 0)
      .def("parameters", [](const Model& model) {
        py::dict out;
        for (const auto& p : model.parameters()) out[py::str(p.name)] = to_array(p.tensor);
        return out;
      })
      .def("census", [](const Model& model) {
        const auto c = param_census(model);
        py::list rows;
        for (const auto& r : c.rows) rows.append(py::make_tuple(r.name, r.count, r.strategy));
        return py::make_tuple(rows, c.total);
      })
      .def("routing", [](const Model& model, std::size_t layer, const std::string& site) {
        const MixingLinear<float>* mix = nullptr;
        if (site == "v") mix = &model.attention(layer).v_mix();
        else if (site == "o") mix = &model.attention(layer).o_mix();
        else if (site == "up") mix = &model.ffn(layer).up_mix();
        else if (site == "down") mix = &model.ffn(layer).down_mix();
        else throw UsageError("routing: site must be v, o, up or down");
        const auto h = static_cast<py::ssize_t>(mix->heads());
        return to_array(export_kronecker(*mix), {h, h});
      }, py::arg("layer"), py::arg("site"), "H x H Kronecker routing matrix; entry (k, h) routes head h into k");

  m.def("evaluate", [](const Model& model, const std::string& text, const BpeTokenizer& tok, std::size_t seq_len,
                       double alpha, std::optional<std::string> ablation, std::uint64_t seed) {
    const auto ds = make_dataset(text, tok, seq_len);
    const auto spec = parse_ablation(ablation, seed);
    py::gil_scoped_release release;
    return eval_loss(model, ds, alpha, spec);
  }, py::arg("model"), py::arg("text"), py::arg("tokenizer"), py::arg("seq_len"), py::arg("alpha") = 1.0,
     py::arg("ablation") = py::none(), py::arg("seed") = 0, "Mean next-token cross-entropy over the text");

  m.def("sweep", [](const Model& model, const std::string& text, const BpeTokenizer& tok, std::size_t seq_len,
                    const std::vector<double>& alphas) {
    const auto ds = make_dataset(text, tok, seq_len);
    SweepResult r;
    {
      py::gil_scoped_release release;
      r = amplification_sweep(model, ds, alphas);
    }
    py::list points;
    for (const auto& p : r.points) points.append(py::make_tuple(p.alpha, p.loss));
    py::dict d;
    d["points"] = points;
    d["auc"] = r.auc ? py::cast(*r.auc) : py::none();
    return d;
  }, py::arg("model"), py::arg("text"), py::arg("tokenizer"), py::arg("seq_len"),
     py::arg("alphas") = kDefaultAlphas);

  m.def("ablate", [](const Model& model, const std::string& text, const BpeTokenizer& tok, std::size_t seq_len,
                     std::uint64_t seed) {
    const auto ds = make_dataset(text, tok, seq_len);
    std::vector<AblationRow> rows;
    {
      py::gil_scoped_release release;
      rows = run_ablation_suite(model, ds, seed);
    }
    py::list out;
    for (const auto& r : rows) out.append(py::make_tuple(r.condition, r.loss, r.delta_pct));
    return out;
  }, py::arg("model"), py::arg("text"), py::arg("tokenizer"), py::arg("seq_len"), py::arg("seed") = 0);

  m.def("specialize", [](const Model& model, const std::string& text, const BpeTokenizer& tok, std::size_t seq_len,
                         double alpha) {
    const auto ds = make_dataset(text, tok, seq_len);
    SpecializationReport r;
    {
      py::gil_scoped_release release;
      r = head_specialization(model, ds, alpha);
    }
    return report_dict(r);
  }, py::arg("model"), py::arg("text"), py::arg("tokenizer"), py::arg("seq_len"), py::arg("alpha") = 1.0);

  m.def("train", &train_from_config, py::arg("config"), py::arg("overrides") = std::map<std::string, std::string>{},
        "Train from a run config file; overrides are dotted key -> value strings");
}
