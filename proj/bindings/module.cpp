#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "comatch/gradcheck.hpp"
#include "comatch/runconfig.hpp"

namespace py = pybind11;
using namespace comatch;

namespace {

using Mat = std::vector<std::vector<double>>;

Tensor to_tensor(const Mat& m) {
  const std::size_t rows = m.size();
  const std::size_t cols = rows == 0 ? 0 : m[0].size();
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    if (m[i].size() != cols) throw ShapeError("ragged matrix");
    for (std::size_t j = 0; j < cols; ++j) t.at(i, j) = m[i][j];
  }
  return t;
}

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

AttentionConfig make_config(double alpha, double beta, const std::string& f_e,
                            const std::string& f_n, const std::string& variant) {
  AttentionConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.f_e = squash_from(f_e);
  cfg.f_n = squash_from(f_n);
  cfg.variant = variant_from(variant);
  cfg.num_heads = 1;
  return cfg;
}

nlohmann::json json_from_py(const py::object& obj) {
  const py::object dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object py_from_json(const nlohmann::json& doc) {
  const py::object loads = py::module_::import("json").attr("loads");
  return loads(doc.dump());
}

RunConfig config_from_dict(const py::dict& config) {
  return parse_run_config(json_from_py(config));
}

std::vector<PairExample> examples_from_py(const py::list& rows) {
  std::vector<PairExample> out;
  for (const auto& row : rows) {
    const py::dict d = row.cast<py::dict>();
    PairExample ex;
    ex.tokens_q = d["q"].cast<std::vector<std::size_t>>();
    ex.tokens_p = d["p"].cast<std::vector<std::size_t>>();
    ex.label = d["label"].cast<std::size_t>();
    ex.tag = d.contains("tag") ? d["tag"].cast<std::string>() : "none";
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "combined-attention sentence matching core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);

  m.def(
      "affinity_matrix",
      [](const Mat& a, const Mat& b, double alpha) {
        Graph g;
        return to_mat(affinity_matrix(g, to_tensor(a), to_tensor(b), alpha));
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 1.0,
      "Pairwise scaled dot products between the rows of a and b.");

  m.def(
      "difference_matrix",
      [](const Mat& a, const Mat& b, double beta) {
        Graph g;
        return to_mat(difference_matrix(g, to_tensor(a), to_tensor(b), beta));
      },
      py::arg("a"), py::arg("b"), py::arg("beta") = 1.0,
      "Negated pairwise L1 distances between the rows of a and b (entries <= 0).");

  m.def(
      "pairwise_l1",
      [](const Mat& a, const Mat& b) {
        Graph g;
        return to_mat(g.pairwise_l1(to_tensor(a), to_tensor(b)));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "softmax_rows",
      [](const Mat& x) {
        Graph g;
        return to_mat(g.softmax_rows(to_tensor(x)));
      },
      py::arg("x"));

  m.def(
      "normalize_difference",
      [](const Mat& n, const std::string& variant) {
        Graph g;
        return to_mat(normalize_difference(g, to_tensor(n), variant_from(variant)));
      },
      py::arg("n"), py::arg("variant") = "center_n");

  m.def(
      "compose",
      [](const Mat& e, const Mat& n, const std::string& f_e, const std::string& f_n,
         const std::string& variant) {
        Graph g;
        return to_mat(compose(g, to_tensor(e), to_tensor(n),
                              make_config(1.0, 1.0, f_e, f_n, variant)));
      },
      py::arg("e"), py::arg("n"), py::arg("f_e") = "tanh", py::arg("f_n") = "sigmoid",
      py::arg("variant") = "none",
      "Combined attention matrix f_e(E) * gate(f_n(N)); N must already be normalized.");

  m.def(
      "attend",
      [](const Mat& a, const Mat& b, double alpha, double beta, const std::string& f_e,
         const std::string& f_n, const std::string& variant) {
        Graph g;
        const Tensor ta = to_tensor(a), tb = to_tensor(b);
        AttendResult res = attend(g, ta, tb, identity_projections(ta.cols()),
                                  make_config(alpha, beta, f_e, f_n, variant), true);
        py::dict out;
        out["a_hat"] = to_mat(res.a_hat);
        out["b_hat"] = to_mat(res.b_hat);
        out["affinity"] = to_mat(res.trace->affinity);
        out["difference_raw"] = to_mat(res.trace->difference_raw);
        out["difference_norm"] = to_mat(res.trace->difference_norm);
        out["combined"] = to_mat(res.trace->combined);
        return out;
      },
      py::arg("a"), py::arg("b"), py::arg("alpha") = 1.0, py::arg("beta") = 1.0,
      py::arg("f_e") = "tanh", py::arg("f_n") = "sigmoid", py::arg("variant") = "none",
      "Full cross-attention pipeline with identity projections: returns the aligned "
      "sequences and the E/N/M trace. The difference side is scaled by 1/sqrt(d).");

  m.def(
      "generate",
      [](const py::dict& spec) {
        nlohmann::json doc;
        doc["synthetic"] = json_from_py(spec);
        const RunConfig cfg = parse_run_config(doc);
        py::list out;
        for (const PairExample& ex : generate(cfg.synthetic)) {
          py::dict row;
          row["q"] = ex.tokens_q;
          row["p"] = ex.tokens_p;
          row["label"] = ex.label;
          row["tag"] = ex.tag;
          out.append(std::move(row));
        }
        return out;
      },
      py::arg("spec"),
      "Generate the synthetic pair dataset for a synthetic-spec dict (all keys optional).");

  m.def(
      "token_names",
      [](const py::dict& spec) {
        nlohmann::json doc;
        doc["synthetic"] = json_from_py(spec);
        const RunConfig cfg = parse_run_config(doc);
        std::vector<std::string> names;
        for (std::size_t id = 0; id < cfg.synthetic.vocab_size(); ++id)
          names.push_back(cfg.synthetic.token_name(id));
        return names;
      },
      py::arg("spec"));

  m.def(
      "train_toy",
      [](const py::dict& config, const py::list& examples) {
        const RunConfig cfg = config_from_dict(config);
        std::vector<PairExample> data = examples_from_py(examples);
        std::vector<PairExample> train_set, dev_set;
        split_dataset(data, cfg.training.dev_fraction, cfg.training.seed, train_set, dev_set);
        if (dev_set.empty() && !train_set.empty()) {
          dev_set.push_back(train_set.back());
          train_set.pop_back();
        }
        Rng rng(cfg.training.seed);
        MatcherModel model = init_matcher(cfg.encoder, cfg.matcher, rng);
        const TrainReport report = train(model, train_set, dev_set, cfg.training);
        py::dict out;
        out["epoch_loss"] = report.epoch_loss;
        out["dev_accuracy"] = report.dev_accuracy;
        out["best_epoch"] = report.best_epoch;
        out["best_dev_accuracy"] = report.best_dev_accuracy;
        out["steps"] = report.steps;
        return out;
      },
      py::arg("config"), py::arg("examples"),
      "Train a matcher on the given examples with a run-config dict; returns the report.");

  m.def(
      "default_config",
      []() { return py_from_json(run_config_to_json([] {
               RunConfig cfg;
               cfg.finalize();
               return cfg;
             }())); },
      "The fully resolved default run configuration.");

  m.def(
      "gradcheck_attend",
      [](std::uint64_t seed) {
        Rng rng(seed);
        AttentionConfig cfg;
        cfg.num_heads = 1;
        cfg.d_model = cfg.d_k = 5;
        Tensor a = Tensor::zeros({3, 5}), b = Tensor::zeros({4, 5});
        Tensor w_e = Tensor::zeros({5, 5}), w_n = Tensor::zeros({5, 5});
        Tensor cof_a = Tensor::zeros({3, 5}), cof_b = Tensor::zeros({4, 5});
        for (Tensor* t : {&a, &b, &w_e, &w_n, &cof_a, &cof_b})
          for (std::size_t i = 0; i < t->size(); ++i) t->at(i) = rng.uniform(-1.0, 1.0);
        NamedParams params{{"a", &a}, {"b", &b}, {"w_e", &w_e}, {"w_n", &w_n}};
        auto f = [&](Graph& g, const std::vector<Tensor>& leaves) {
          ProjectionSet proj{leaves[2], leaves[3], false};
          AttendResult res = attend(g, leaves[0], leaves[1], proj, cfg);
          return g.add(g.mean_all(g.mul(res.a_hat, cof_a)), g.mean_all(g.mul(res.b_hat, cof_b)));
        };
        return finite_diff_check(f, params).max_rel_err;
      },
      py::arg("seed") = 0,
      "Max relative error of the attend pipeline gradients against central differences.");
}
