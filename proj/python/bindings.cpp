#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "fgaps/boundlab.hpp"
#include "fgaps/directions.hpp"
#include "fgaps/errors.hpp"
#include "fgaps/linalg.hpp"
#include "fgaps/metrics.hpp"
#include "fgaps/pipeline.hpp"
#include "fgaps/scoring.hpp"
#include "fgaps/synthetic.hpp"
#include "fgaps/tensorio.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace fgaps;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<Feature> features_from(const std::vector<std::string>& names) {
  if (names.empty()) return {kAllFeatures.begin(), kAllFeatures.end()};
  std::vector<Feature> out;
  for (const auto& n : names) out.push_back(parse_feature(n));
  return out;
}

std::vector<EvalPair> pairs_from(const std::vector<double>& u, const std::vector<int>& correct) {
  return make_pairs(u, correct);
}

py::dict read_tensors(const fs::path& path) {
  py::dict out;
  for (const auto& [name, t] : read_tensor_file(path).tensors) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> arr(shape);
    std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
    out[py::str(name)] = arr;
  }
  return out;
}

void write_tensors(const py::dict& tensors, const fs::path& path) {
  TensorMap map;
  for (const auto& [key, value] : tensors) {
    const auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(value);
    if (!arr) throw Error(Errc::InvalidArgument, "tensor values must be numeric arrays");
    Tensor t;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) t.shape.push_back(arr.shape(i));
    const double* p = arr.data();
    Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(p, arr.size());
    t.data = Tensor::from_vector(flat).data;
    map.emplace(py::cast<std::string>(key), std::move(t));
  }
  write_tensor_file(map, path);
}

py::dict curve_dict(const RejectionCurve& rc) {
  py::dict d;
  d["points"] = rc.points;
  d["oracle_points"] = rc.oracle_points;
  d["random_points"] = rc.random_points;
  d["area_method"] = rc.area_method;
  d["area_oracle"] = rc.area_oracle;
  d["area_random"] = rc.area_random;
  d["base_error"] = rc.base_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feature-gap epistemic uncertainty engine";
  static py::handle error_type = py::exception<Error>(m, "FeatureGapsError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("read_tensors", &read_tensors, py::arg("path"));
  m.def("write_tensors", &write_tensors, py::arg("tensors"), py::arg("path"));

  m.def(
      "principal_direction",
      [](const Eigen::MatrixXd& rows, bool center) {
        PcaOptions o;
        o.center = center;
        return principal_direction(rows, o);
      },
      py::arg("rows"), py::arg("center") = true);
  m.def("spectral_norm", [](const Eigen::MatrixXd& w) { return linalg::spectral_norm(w); }, py::arg("w"));

  m.def(
      "auroc", [](const std::vector<double>& u, const std::vector<int>& c) { return auroc(pairs_from(u, c)); },
      py::arg("u"), py::arg("correct"));
  m.def(
      "prr", [](const std::vector<double>& u, const std::vector<int>& c) { return prr(pairs_from(u, c)); },
      py::arg("u"), py::arg("correct"));
  m.def(
      "rejection_curve",
      [](const std::vector<double>& u, const std::vector<int>& c) { return curve_dict(rejection_curve(pairs_from(u, c))); },
      py::arg("u"), py::arg("correct"));

  m.def(
      "layer_score",
      [](const Eigen::MatrixXd& hidden_mean, const Eigen::VectorXd& v, int layer) {
        ActivationBundle b;
        b.hidden_mean = hidden_mean;
        FeatureDirection d;
        d.v = v;
        d.layer = layer;
        return layer_score(b, d);
      },
      py::arg("hidden_mean"), py::arg("v"), py::arg("layer"));
  m.def(
      "logistic_loss_and_gradient",
      [](const Eigen::MatrixXd& z, const std::vector<int>& y, const Eigen::VectorXd& w, double b, double l2) {
        const auto lg = logistic_loss_and_gradient(z, y, w, b, l2);
        return py::make_tuple(lg.loss, lg.grad_w, lg.grad_b);
      },
      py::arg("z"), py::arg("labels"), py::arg("w"), py::arg("b"), py::arg("l2_lambda"));
  m.def(
      "fit_logistic",
      [](const Eigen::MatrixXd& z, const std::vector<int>& y, double lr, int epochs, double l2, bool intercept) {
        const auto fit = fit_logistic(z, y, TrainConfig{lr, epochs, l2, intercept});
        py::dict d;
        d["w"] = fit.w;
        d["b"] = fit.b;
        d["loss_history"] = fit.loss_history;
        return d;
      },
      py::arg("z"), py::arg("labels"), py::arg("learning_rate") = 0.1, py::arg("epochs") = 500,
      py::arg("l2_lambda") = 1e-3, py::arg("intercept") = true);

  m.def(
      "softmax",
      [](const Eigen::MatrixXd& w, const Eigen::VectorXd& h) {
        return boundlab::softmax_distribution(boundlab::ProjectionHead(w), h);
      },
      py::arg("w"), py::arg("h"));
  m.def(
      "uncertainty_breakdown",
      [](const Eigen::MatrixXd& w, const Eigen::VectorXd& h_star, const Eigen::VectorXd& h) {
        const auto b = boundlab::uncertainty_breakdown(boundlab::ProjectionHead(w), h_star, h);
        py::dict d;
        d["total"] = b.total;
        d["aleatoric"] = b.aleatoric;
        d["epistemic"] = b.epistemic;
        d["bound"] = b.bound;
        d["frobenius_bound"] = b.frobenius_bound;
        return d;
      },
      py::arg("w"), py::arg("h_star"), py::arg("h"));
  m.def(
      "proof_intermediates",
      [](const Eigen::MatrixXd& w, const Eigen::VectorXd& h_star, const Eigen::VectorXd& h) {
        const auto p = boundlab::proof_intermediates(boundlab::ProjectionHead(w), h_star, h);
        py::dict d;
        d["term1"] = p.term1;
        d["term1_bound"] = p.term1_bound;
        d["term2"] = p.term2;
        d["lse_gap"] = p.lse_gap;
        d["norm_bound"] = p.norm_bound;
        return d;
      },
      py::arg("w"), py::arg("h_star"), py::arg("h"));
  m.def(
      "toy_optimal_prompt",
      [](int vocab, int dim, std::uint64_t seed, const std::vector<std::vector<int>>& inputs,
         const std::vector<int>& golden, int max_len) {
        const auto model = boundlab::ToyLM::random(vocab, dim, seed);
        const auto r = boundlab::toy_optimal_prompt(model, inputs, golden, max_len);
        py::dict d;
        d["s_star"] = r.s_star;
        d["objective"] = r.objective;
        d["kl_curve"] = r.kl_curve;
        d["evaluated"] = r.evaluated;
        return d;
      },
      py::arg("vocab"), py::arg("dim"), py::arg("seed"), py::arg("eval_inputs"), py::arg("golden_prefix"),
      py::arg("max_prompt_len"));
  m.def(
      "feature_gap_reconstruction",
      [](const Eigen::VectorXd& h_star, const Eigen::VectorXd& h, const std::vector<Eigen::VectorXd>& basis) {
        const auto r = boundlab::feature_gap_reconstruction(h_star, h, basis);
        py::dict d;
        d["coeff_gap"] = r.coeff_gap;
        d["alpha"] = r.alpha;
        d["beta"] = r.beta;
        d["residual"] = r.residual;
        return d;
      },
      py::arg("h_star"), py::arg("h"), py::arg("basis"));

  m.def(
      "generate_planted",
      [](const fs::path& out, int train_samples, int eval_samples, int num_layers, int hidden_dim, int planted_layer,
         int decoy_layer, double noise, double signal, std::uint64_t seed) {
        synthetic::PlantedConfig c;
        c.train_samples = train_samples;
        c.eval_samples = eval_samples;
        c.num_layers = num_layers;
        c.hidden_dim = hidden_dim;
        c.planted_layer = planted_layer;
        c.decoy_layer = decoy_layer;
        c.noise = noise;
        c.signal = signal;
        c.seed = seed;
        const auto ds = synthetic::generate_planted(c, out);
        py::dict d;
        d["train_manifest"] = ds.train_manifest;
        d["eval_manifest"] = ds.eval_manifest;
        d["planted_direction"] = ds.planted_direction;
        d["decoy_direction"] = ds.decoy_direction;
        return d;
      },
      py::arg("out"), py::arg("train_samples") = 256, py::arg("eval_samples") = 256, py::arg("num_layers") = 8,
      py::arg("hidden_dim") = 32, py::arg("planted_layer") = 5, py::arg("decoy_layer") = 7, py::arg("noise") = 0.5,
      py::arg("signal") = 0.6, py::arg("seed") = 7);

  m.def(
      "extract_directions",
      [](const fs::path& manifest, const fs::path& out, const std::vector<std::string>& features,
         const std::string& split, bool center) {
        return to_python(pipeline::extract_directions({manifest, out, features_from(features), split, center}));
      },
      py::arg("manifest"), py::arg("out"), py::arg("features") = std::vector<std::string>{}, py::arg("split") = "",
      py::arg("center") = true);
  m.def(
      "select_layers",
      [](const fs::path& manifest, const fs::path& out, const std::vector<std::string>& features,
         const std::string& split) {
        return to_python(pipeline::select_layers({manifest, out, features_from(features), split}));
      },
      py::arg("manifest"), py::arg("out"), py::arg("features") = std::vector<std::string>{}, py::arg("split") = "");
  m.def(
      "train_ensemble",
      [](const fs::path& manifest, const fs::path& out, const std::string& split, double lr, int epochs, double l2,
         bool intercept) {
        return to_python(pipeline::train({manifest, out, split, TrainConfig{lr, epochs, l2, intercept}}));
      },
      py::arg("manifest"), py::arg("out"), py::arg("split") = "", py::arg("learning_rate") = 0.1,
      py::arg("epochs") = 500, py::arg("l2_lambda") = 1e-3, py::arg("intercept") = true);
  m.def(
      "score",
      [](const fs::path& model, const fs::path& manifest, const fs::path& out, const std::string& split) {
        return to_python(pipeline::score({model, manifest, out, split}));
      },
      py::arg("model"), py::arg("manifest"), py::arg("out"), py::arg("split") = "");
  m.def(
      "evaluate",
      [](const fs::path& scores, const fs::path& manifest, const fs::path& out, const std::string& column,
         bool negate, bool plot, const std::string& split) {
        return to_python(pipeline::evaluate({scores, manifest, out, column, negate, plot, split}));
      },
      py::arg("scores"), py::arg("manifest"), py::arg("out"), py::arg("column") = "u", py::arg("negate") = false,
      py::arg("plot") = false, py::arg("split") = "");
  m.def(
      "verify_bound",
      [](const fs::path& out, int trials, std::uint64_t seed, bool degenerate) {
        boundlab::BoundSuiteConfig c;
        c.trials = trials;
        c.seed = seed;
        c.degenerate = degenerate;
        return to_python(pipeline::verify_bound({c, out}));
      },
      py::arg("out"), py::arg("trials") = 1000, py::arg("seed") = 42, py::arg("degenerate") = false);
  m.def(
      "ablation",
      [](const fs::path& manifest, const fs::path& eval_manifest, const fs::path& out, const std::string& strategy,
         std::uint64_t seed, std::size_t train_limit) {
        pipeline::AblationOptions o;
        o.manifest = manifest;
        o.eval_manifest = eval_manifest;
        o.out = out;
        o.strategy = strategy;
        o.seed = seed;
        o.train_limit = train_limit;
        return to_python(pipeline::ablation(o));
      },
      py::arg("manifest"), py::arg("eval_manifest"), py::arg("out"), py::arg("strategy") = "all",
      py::arg("seed") = 0, py::arg("train_limit") = 0);
  m.def(
      "verify_artifacts", [](const fs::path& dir) { return to_python(pipeline::verify_artifacts(dir)); },
      py::arg("dir"));
}
