// Python bindings for the main operations: weight construction, fitting,
// clusterpath computation, refitting, cross-validated selection, simulation,
// and evaluation.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cggm/clusterpath.hpp"
#include <json.hpp>

#include "cggm/errors.hpp"
#include "cggm/io.hpp"
#include "cggm/model_selection.hpp"
#include "cggm/simulation.hpp"

namespace py = pybind11;
using namespace cggm;

namespace {

EstimationTarget target_from_string(const std::string& name) {
  if (name == "precision") return EstimationTarget::precision;
  if (name == "covariance") return EstimationTarget::covariance;
  throw InputError("target must be 'precision' or 'covariance'");
}

std::string target_to_string(EstimationTarget target) {
  return target == EstimationTarget::precision ? "precision" : "covariance";
}

PrecisionModel make_model(const std::vector<int>& labels,
                          const Eigen::VectorXd& b, const Eigen::MatrixXd& R,
                          const std::string& target) {
  PrecisionModel model;
  model.assignment = ClusterAssignment::from_labels(labels);
  if (b.size() != model.assignment.K || R.rows() != model.assignment.K ||
      R.cols() != model.assignment.K)
    throw InputError("parameter dimensions do not match the label vector");
  model.params.b = b;
  model.params.R = (R + R.transpose()) / 2.0;
  model.target = target_from_string(target);
  canonicalize_singletons(model.params, model.assignment.sizes);
  return model;
}

SolverSettings make_settings(std::optional<double> eps_fusion, double eps_conv,
                             int max_iter) {
  SolverSettings settings;
  settings.eps_fusion = eps_fusion;
  settings.eps_conv = eps_conv;
  settings.max_iter = max_iter;
  return settings;
}

}  // namespace

PYBIND11_MODULE(_cggm, m) {
  m.doc() = "Clusterpath estimation of Gaussian graphical models";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError",
                                         PyExc_ArithmeticError);

  py::class_<PrecisionModel>(m, "Model")
      .def(py::init(&make_model), py::arg("labels"), py::arg("b"),
           py::arg("r"), py::arg("target") = "precision")
      .def_property_readonly(
          "labels",
          [](const PrecisionModel& model) { return model.assignment.labels; })
      .def_property_readonly(
          "sizes",
          [](const PrecisionModel& model) { return model.assignment.sizes; })
      .def_property_readonly(
          "K", [](const PrecisionModel& model) { return model.assignment.K; })
      .def_property_readonly(
          "b", [](const PrecisionModel& model) { return model.params.b; })
      .def_property_readonly(
          "r", [](const PrecisionModel& model) { return model.params.R; })
      .def_property_readonly("target",
                             [](const PrecisionModel& model) {
                               return target_to_string(model.target);
                             })
      .def("materialize", &materialize)
      .def("log_det",
           [](const PrecisionModel& model) { return log_det(model); })
      .def("inverse", &block_inverse)
      .def("to_json", &model_to_json)
      .def_static("from_json", &model_from_json);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("model", &FitResult::model)
      .def_readonly("objective_trace", &FitResult::objective_trace)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("converged", &FitResult::converged)
      .def_property_readonly("merge_count", [](const FitResult& result) {
        return result.merge_log.size();
      });

  py::class_<PathPoint>(m, "PathPoint")
      .def_readonly("lambda_c", &PathPoint::lambda_c)
      .def_readonly("gamma_c", &PathPoint::gamma_c)
      .def_readonly("K", &PathPoint::K)
      .def_readonly("fit", &PathPoint::fit);

  py::class_<ClusterpathSolution>(m, "Clusterpath")
      .def_readonly("points", &ClusterpathSolution::points)
      .def_readonly("kappa", &ClusterpathSolution::kappa)
      .def("to_json", &path_to_json)
      .def("newick", [](const ClusterpathSolution& path,
                        const std::vector<std::string>& names) {
        return to_newick(dendrogram(path, names));
      }, py::arg("names") = std::vector<std::string>{});

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("frobenius", &EvalReport::frobenius)
      .def_readonly("K_hat", &EvalReport::K_hat)
      .def_readonly("ari", &EvalReport::ari)
      .def_readonly("fpr", &EvalReport::fpr)
      .def_readonly("fnr", &EvalReport::fnr);

  py::class_<CvEntry>(m, "CvEntry")
      .def_readonly("knn", &CvEntry::knn)
      .def_readonly("phi", &CvEntry::phi)
      .def_readonly("lambda_s", &CvEntry::lambda_s)
      .def_readonly("lambda_c", &CvEntry::lambda_c)
      .def_readonly("mean_score", &CvEntry::mean_score);

  py::class_<CvResult>(m, "CvResult")
      .def_readonly("best", &CvResult::best)
      .def_readonly("raw_fit", &CvResult::raw_fit)
      .def_readonly("refit_fit", &CvResult::refit_fit)
      .def_readonly("table", &CvResult::table)
      .def_readonly("fold_indices", &CvResult::fold_indices)
      .def("to_json", &cv_result_to_json);

  m.def("build_weights",
        [](const Eigen::MatrixXd& S, int knn, double phi) {
          return build_weights(S, knn, phi).dense();
        },
        py::arg("S"), py::arg("knn") = 5, py::arg("phi") = 1.0);

  m.def("pairwise_distance", &pairwise_distance, py::arg("M"), py::arg("j"),
        py::arg("j_prime"));

  m.def("fit",
        [](const Eigen::MatrixXd& S, double lambda_c, double lambda_s,
           int knn, double phi, std::optional<Eigen::MatrixXd> weights,
           std::optional<PrecisionModel> init,
           std::optional<double> eps_fusion, double eps_conv, int max_iter) {
          PenaltyConfig cfg;
          const int p = static_cast<int>(S.rows());
          cfg.clustering_weights =
              weights ? SymmetricWeights::from_dense(*weights)
                      : build_weights(S, knn, phi);
          cfg.sparsity_weights = SymmetricWeights::ones(p);
          cfg.lambda_c = lambda_c;
          cfg.lambda_s = lambda_s;
          return fit(S, cfg, make_settings(eps_fusion, eps_conv, max_iter),
                     init);
        },
        py::arg("S"), py::arg("lambda_c") = 0.0, py::arg("lambda_s") = 0.0,
        py::arg("knn") = 5, py::arg("phi") = 1.0,
        py::arg("weights") = std::nullopt, py::arg("init") = std::nullopt,
        py::arg("eps_fusion") = std::nullopt, py::arg("eps_conv") = 1e-7,
        py::arg("max_iter") = 5000,
        py::call_guard<py::gil_scoped_release>());

  m.def("compute_path",
        [](const Eigen::MatrixXd& S, double lambda_s, int knn, double phi,
           std::optional<double> eps_fusion, double eps_conv, int max_iter) {
          PenaltyConfig cfg;
          cfg.clustering_weights = build_weights(S, knn, phi);
          cfg.sparsity_weights =
              SymmetricWeights::ones(static_cast<int>(S.rows()));
          cfg.lambda_s = lambda_s;
          return compute_path(S, cfg,
                              make_settings(eps_fusion, eps_conv, max_iter));
        },
        py::arg("S"), py::arg("lambda_s") = 0.0, py::arg("knn") = 5,
        py::arg("phi") = 1.0, py::arg("eps_fusion") = std::nullopt,
        py::arg("eps_conv") = 1e-7, py::arg("max_iter") = 5000,
        py::call_guard<py::gil_scoped_release>());

  m.def("refit",
        [](const PrecisionModel& model, const Eigen::MatrixXd& S,
           double zero_threshold) {
          return refit(model, S, SolverSettings{}, zero_threshold);
        },
        py::arg("model"), py::arg("S"), py::arg("zero_threshold") = 5e-3,
        py::call_guard<py::gil_scoped_release>());

  m.def("select",
        [](const Eigen::MatrixXd& X, int folds, std::vector<int> knn,
           std::vector<double> phi, std::vector<double> lambda_s,
           const std::string& target, std::uint64_t seed, bool standardize) {
          CvPlan plan;
          plan.folds = folds;
          plan.knn_grid = std::move(knn);
          plan.phi_grid = std::move(phi);
          plan.lambda_s_grid = std::move(lambda_s);
          plan.target = target_from_string(target);
          plan.seed = seed;
          plan.standardize = standardize;
          return select(X, plan, SolverSettings{});
        },
        py::arg("X"), py::arg("folds") = 5,
        py::arg("knn") = std::vector<int>{5},
        py::arg("phi") = std::vector<double>{1.0},
        py::arg("lambda_s") = std::vector<double>{},
        py::arg("target") = "precision", py::arg("seed") = 0,
        py::arg("standardize") = false,
        py::call_guard<py::gil_scoped_release>());

  m.def("lambda_s_grid", &lambda_s_grid, py::arg("S"));

  m.def("generate",
        [](const std::string& design, int p, int n, int K, double edge_prob,
           std::uint64_t seed, bool approx, const std::string& target) {
          DesignSpec spec;
          spec.name = design_from_string(design);
          spec.p = p;
          spec.n = n;
          spec.K = K;
          spec.edge_prob = edge_prob;
          spec.seed = seed;
          spec.approx = approx;
          spec.target = target_from_string(target);
          const SimulatedData data = generate(spec);
          return py::make_tuple(data.X, data.truth, data.labels);
        },
        py::arg("design") = "chain", py::arg("p") = 15, py::arg("n") = 120,
        py::arg("K") = 3, py::arg("edge_prob") = 0.1, py::arg("seed") = 0,
        py::arg("approx") = false, py::arg("target") = "precision");

  m.def("evaluate",
        [](const PrecisionModel& model, const Eigen::MatrixXd& truth,
           const std::vector<int>& labels, double zero_threshold) {
          return evaluate(model, truth, labels, zero_threshold);
        },
        py::arg("model"), py::arg("truth"), py::arg("labels"),
        py::arg("zero_threshold") = 0.0);

  m.def("adjusted_rand_index", &adjusted_rand_index, py::arg("a"),
        py::arg("b"));
}
