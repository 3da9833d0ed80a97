// Command-line interface for fitting, clusterpath computation,
// cross-validated selection, simulation, and evaluation, with file-based
// input and output.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <json.hpp>

#include "cggm/errors.hpp"
#include "cggm/io.hpp"
#include "cggm/parallel.hpp"

namespace {

using namespace cggm;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 4;

struct CommonData {
  std::string data_path;
  std::string covariance_path;
  int nobs = 0;
  bool standardize = false;

  Eigen::MatrixXd S;
  Eigen::MatrixXd X;  // empty when a covariance file was given
  std::vector<std::string> names;
  bool has_rows = false;
};

void add_data_options(CLI::App* cmd, CommonData& data) {
  auto* data_opt = cmd->add_option("--data", data.data_path,
                                   "CSV of observations (rows) by variables");
  auto* cov_opt = cmd->add_option("--covariance", data.covariance_path,
                                  "precomputed covariance matrix CSV");
  cmd->add_option("--nobs", data.nobs,
                  "number of observations behind --covariance");
  cmd->add_flag("--standardize", data.standardize,
                "z-score the columns before fitting");
  data_opt->excludes(cov_opt);
}

void load_data(CommonData& data) {
  if (!data.data_path.empty()) {
    DataTable table = read_csv_matrix(data.data_path);
    data.names = table.column_names;
    data.X = column_center(table.values, data.standardize);
    data.S = sample_covariance(data.X);
    data.has_rows = true;
  } else if (!data.covariance_path.empty()) {
    DataTable table = read_csv_matrix(data.covariance_path);
    if (table.values.rows() != table.values.cols())
      throw InputError("covariance matrix must be square");
    data.names = table.column_names;
    data.S = table.values;
  } else {
    throw InputError("either --data or --covariance is required");
  }
  if (data.names.empty())
    for (int j = 0; j < data.S.cols(); ++j)
      data.names.push_back("V" + std::to_string(j + 1));
}

struct TuningOptions {
  double lambda_c = 0.0;
  double lambda_s = 0.0;
  double phi = 1.0;
  int knn = 5;
  std::string weights_path;
  std::string sparsity_weights_path;
  std::string target = "precision";
};

void add_tuning_options(CLI::App* cmd, TuningOptions& tuning,
                        bool with_lambda_c) {
  if (with_lambda_c)
    cmd->add_option("--lambda-c", tuning.lambda_c,
                    "aggregation penalty multiplier");
  cmd->add_option("--lambda-s", tuning.lambda_s, "sparsity penalty multiplier");
  cmd->add_option("--phi", tuning.phi, "weight decay rate");
  cmd->add_option("--knn", tuning.knn, "nearest neighbors for the weights");
  cmd->add_option("--weights", tuning.weights_path,
                  "clustering weights as triplet CSV (overrides --knn/--phi)");
  cmd->add_option("--sparsity-weights", tuning.sparsity_weights_path,
                  "sparsity weights as triplet CSV");
  cmd->add_option("--target", tuning.target, "precision or covariance")
      ->check(CLI::IsMember({"precision", "covariance"}));
}

void add_solver_options(CLI::App* cmd, SolverSettings& settings,
                        std::optional<double>& eps_fusion) {
  auto holder = std::make_shared<double>(0.0);
  auto* opt = cmd->add_option("--eps-fusion", *holder, "fusion threshold");
  opt->each([&eps_fusion, holder](const std::string&) { eps_fusion = *holder; });
  cmd->add_option("--eps-conv", settings.eps_conv, "convergence tolerance");
  cmd->add_option("--max-iter", settings.max_iter, "maximum outer iterations");
  cmd->add_option("--golden-tol", settings.golden_tol,
                  "line search interval tolerance");
  cmd->add_option("--tau", settings.tau,
                  "scale of the data-driven fusion threshold");
}

EstimationTarget parse_target(const std::string& name) {
  return name == "covariance" ? EstimationTarget::covariance
                              : EstimationTarget::precision;
}

// The solver pipeline runs on the inverse of the covariance when the
// covariance matrix itself is the object of interest.
Eigen::MatrixXd solver_input(const CommonData& data,
                             EstimationTarget target) {
  return target == EstimationTarget::covariance ? weight_base_matrix(data.S)
                                                : data.S;
}

PenaltyConfig make_penalty_config(const TuningOptions& tuning,
                                  const Eigen::MatrixXd& input) {
  PenaltyConfig cfg;
  const int p = static_cast<int>(input.rows());
  if (!tuning.weights_path.empty())
    cfg.clustering_weights =
        SymmetricWeights::from_csv(read_text_file(tuning.weights_path), p);
  else
    cfg.clustering_weights = build_weights(input, tuning.knn, tuning.phi);
  if (!tuning.sparsity_weights_path.empty())
    cfg.sparsity_weights = SymmetricWeights::from_csv(
        read_text_file(tuning.sparsity_weights_path), p);
  else
    cfg.sparsity_weights = SymmetricWeights::ones(p);
  cfg.lambda_c = tuning.lambda_c;
  cfg.lambda_s = tuning.lambda_s;
  cfg.phi = tuning.phi;
  cfg.knn = tuning.knn;
  return cfg;
}

std::string output_in(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Clusterpath estimation of Gaussian graphical models"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand(
      "fit", "fit a single model at fixed penalty multipliers");
  CommonData fit_data;
  TuningOptions fit_tuning;
  SolverSettings fit_settings;
  std::optional<double> fit_eps_fusion;
  std::string fit_output = "model.json";
  add_data_options(fit_cmd, fit_data);
  add_tuning_options(fit_cmd, fit_tuning, true);
  add_solver_options(fit_cmd, fit_settings, fit_eps_fusion);
  fit_cmd->add_option("--output", fit_output, "output JSON path");
  fit_cmd->callback([&] {
    load_data(fit_data);
    const EstimationTarget target = parse_target(fit_tuning.target);
    const Eigen::MatrixXd input = solver_input(fit_data, target);
    const PenaltyConfig cfg = make_penalty_config(fit_tuning, input);
    fit_settings.eps_fusion = fit_eps_fusion;
    FitResult result = fit(input, cfg, fit_settings);
    result.model.target = target;
    write_text_file(fit_output, fit_result_to_json(result));
  });

  // ---- path ----
  auto* path_cmd = app.add_subcommand(
      "path", "compute the automated clusterpath and dendrogram");
  CommonData path_data;
  TuningOptions path_tuning;
  SolverSettings path_settings;
  std::optional<double> path_eps_fusion;
  std::string path_output_dir = ".";
  add_data_options(path_cmd, path_data);
  add_tuning_options(path_cmd, path_tuning, false);
  add_solver_options(path_cmd, path_settings, path_eps_fusion);
  path_cmd->add_option("--output-dir", path_output_dir,
                       "directory for path.json, dendrogram.json, "
                       "dendrogram.nwk");
  path_cmd->callback([&] {
    load_data(path_data);
    const EstimationTarget target = parse_target(path_tuning.target);
    const Eigen::MatrixXd input = solver_input(path_data, target);
    const PenaltyConfig cfg = make_penalty_config(path_tuning, input);
    path_settings.eps_fusion = path_eps_fusion;
    const ClusterpathSolution path = compute_path(input, cfg, path_settings);
    const Dendrogram tree = dendrogram(path, path_data.names);
    write_text_file(output_in(path_output_dir, "path.json"),
                    path_to_json(path));
    write_text_file(output_in(path_output_dir, "dendrogram.json"),
                    dendrogram_to_json(tree));
    write_text_file(output_in(path_output_dir, "dendrogram.nwk"),
                    to_newick(tree) + "\n");
  });

  // ---- cv ----
  auto* cv_cmd = app.add_subcommand(
      "cv", "cross-validated selection over (knn, phi, lambda_s, lambda_c)");
  CommonData cv_data;
  SolverSettings cv_settings;
  std::optional<double> cv_eps_fusion;
  CvPlan cv_plan;
  std::string cv_target = "precision";
  std::string cv_output_dir = ".";
  std::uint64_t cv_seed = 0;
  add_data_options(cv_cmd, cv_data);
  add_solver_options(cv_cmd, cv_settings, cv_eps_fusion);
  cv_cmd->add_option("--folds", cv_plan.folds, "number of folds");
  cv_cmd->add_option("--knn", cv_plan.knn_grid, "neighbor count candidates")
      ->delimiter(',');
  cv_cmd->add_option("--phi", cv_plan.phi_grid, "decay rate candidates")
      ->delimiter(',');
  cv_cmd->add_option("--lambda-s", cv_plan.lambda_s_grid,
                     "sparsity grid override")
      ->delimiter(',');
  cv_cmd->add_option("--target", cv_target, "precision or covariance")
      ->check(CLI::IsMember({"precision", "covariance"}));
  cv_cmd->add_option("--seed", cv_seed, "fold shuffling seed");
  cv_cmd->add_option("--output-dir", cv_output_dir,
                     "directory for cv.json and model.json");
  cv_cmd->callback([&] {
    if (cv_data.data_path.empty())
      throw InputError("cv requires --data (row-level observations)");
    cv_plan.target = parse_target(cv_target);
    cv_plan.seed = cv_seed;
    cv_plan.standardize = cv_data.standardize;
    cv_settings.eps_fusion = cv_eps_fusion;
    const DataTable table = read_csv_matrix(cv_data.data_path);
    const CvResult result = select(table.values, cv_plan, cv_settings);
    write_text_file(output_in(cv_output_dir, "cv.json"),
                    cv_result_to_json(result));
    write_text_file(output_in(cv_output_dir, "model.json"),
                    fit_result_to_json(result.refit_fit));
    write_text_file(output_in(cv_output_dir, "raw_model.json"),
                    fit_result_to_json(result.raw_fit));
  });

  // ---- refit ----
  auto* refit_cmd = app.add_subcommand(
      "refit", "maximum-likelihood refit constrained by a fitted structure");
  CommonData refit_data;
  SolverSettings refit_settings;
  std::optional<double> refit_eps_fusion;
  std::string refit_model_path;
  std::string refit_output = "refit.json";
  double refit_threshold = 5e-3;
  add_data_options(refit_cmd, refit_data);
  add_solver_options(refit_cmd, refit_settings, refit_eps_fusion);
  refit_cmd->add_option("--model", refit_model_path, "fitted model JSON")
      ->required();
  refit_cmd->add_option("--zero-threshold", refit_threshold,
                        "entries below this magnitude are pinned to zero");
  refit_cmd->add_option("--output", refit_output, "output JSON path");
  refit_cmd->callback([&] {
    load_data(refit_data);
    const PrecisionModel model =
        model_from_json(read_text_file(refit_model_path));
    const Eigen::MatrixXd input = solver_input(refit_data, model.target);
    FitResult result = refit(model, input, refit_settings, refit_threshold);
    result.model.target = model.target;
    write_text_file(refit_output, fit_result_to_json(result));
  });

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand(
      "simulate", "draw data from a study design; with --replications, run "
                  "the full benchmark study");
  DesignSpec sim_spec;
  std::string sim_design = "chain";
  std::string sim_target = "precision";
  std::string sim_output_dir = ".";
  int sim_replications = 0;
  int sim_folds = 3;
  std::vector<int> sim_knn{1, 3, 5};
  std::vector<double> sim_phi{1.0};
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--design", sim_design, "design name")
      ->check(CLI::IsMember({"random", "chain", "unbalanced", "unstructured",
                             "diag_balanced", "diag_unbalanced",
                             "blockdiag_balanced", "blockdiag_unbalanced",
                             "approx_variant"}));
  sim_cmd->add_option("--p", sim_spec.p, "number of variables");
  sim_cmd->add_option("--n", sim_spec.n, "number of observations");
  sim_cmd->add_option("--k", sim_spec.K, "number of clusters");
  sim_cmd->add_option("--edge-prob", sim_spec.edge_prob,
                      "edge probability for random structures");
  sim_cmd->add_flag("--approx", sim_spec.approx,
                    "draw block values from intervals");
  sim_cmd->add_option("--target", sim_target, "precision or covariance")
      ->check(CLI::IsMember({"precision", "covariance"}));
  sim_cmd->add_option("--seed", sim_seed, "random seed");
  sim_cmd->add_option("--replications", sim_replications,
                      "run the study with this many replications");
  sim_cmd->add_option("--folds", sim_folds, "folds for the study");
  sim_cmd->add_option("--knn", sim_knn, "neighbor candidates for the study")
      ->delimiter(',');
  sim_cmd->add_option("--phi", sim_phi, "decay candidates for the study")
      ->delimiter(',');
  sim_cmd->add_option("--output-dir", sim_output_dir, "output directory");
  sim_cmd->callback([&] {
    sim_spec.name = design_from_string(sim_design);
    sim_spec.target = parse_target(sim_target);
    sim_spec.seed = sim_seed;
    if (sim_replications > 0) {
      CvPlan plan;
      plan.folds = sim_folds;
      plan.knn_grid = sim_knn;
      plan.phi_grid = sim_phi;
      const auto rows =
          run_study({sim_spec}, sim_replications, plan, SolverSettings{});
      write_text_file(output_in(sim_output_dir, "results.csv"),
                      study_to_csv(rows));
      write_text_file(output_in(sim_output_dir, "summary.json"),
                      study_summary_to_json(rows));
      return;
    }
    const SimulatedData data = generate(sim_spec);
    std::vector<std::string> names;
    for (int j = 0; j < sim_spec.p; ++j)
      names.push_back("V" + std::to_string(j + 1));
    write_csv_matrix(output_in(sim_output_dir, "data.csv"), data.X, names);
    write_text_file(output_in(sim_output_dir, "truth.json"),
                    truth_to_json(data, sim_spec));
  });

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "score a fitted model against a simulation truth");
  std::string eval_model_path, eval_truth_path;
  std::string eval_output = "report.json";
  double eval_threshold = 0.0;
  eval_cmd->add_option("--model", eval_model_path, "fitted model JSON")
      ->required();
  eval_cmd->add_option("--truth", eval_truth_path, "truth JSON from simulate")
      ->required();
  eval_cmd->add_option("--zero-threshold", eval_threshold,
                       "magnitude below which estimates count as zero");
  eval_cmd->add_option("--output", eval_output, "output JSON path");
  eval_cmd->callback([&] {
    const PrecisionModel model =
        model_from_json(read_text_file(eval_model_path));
    nlohmann::json truth;
    try {
      truth = nlohmann::json::parse(read_text_file(eval_truth_path));
    } catch (const std::exception& e) {
      throw InputError(std::string("invalid truth JSON: ") + e.what());
    }
    const auto labels = truth.at("labels").get<std::vector<int>>();
    const auto rows = truth.at("matrix");
    Eigen::MatrixXd matrix(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = rows.at(i).get<std::vector<double>>();
      for (std::size_t j = 0; j < row.size(); ++j) matrix(i, j) = row[j];
    }
    const EvalReport report = evaluate(model, matrix, labels, eval_threshold);
    write_text_file(eval_output, eval_report_to_json(report));
  });

  // ---- weights ----
  auto* weights_cmd = app.add_subcommand(
      "weights", "emit the clustering weight matrix as a triplet CSV");
  CommonData weights_data;
  int weights_knn = 5;
  double weights_phi = 1.0;
  std::string weights_output = "weights.csv";
  add_data_options(weights_cmd, weights_data);
  weights_cmd->add_option("--knn", weights_knn, "nearest neighbors");
  weights_cmd->add_option("--phi", weights_phi, "decay rate");
  weights_cmd->add_option("--output", weights_output, "output CSV path");
  weights_cmd->callback([&] {
    load_data(weights_data);
    const SymmetricWeights W =
        build_weights(weights_data.S, weights_knn, weights_phi);
    write_text_file(weights_output, W.to_csv());
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const cggm::InputError& e) {
    std::cerr << cggm::error_to_json("input", e.what());
    return kExitInput;
  } catch (const cggm::NumericalError& e) {
    std::cerr << cggm::error_to_json("numerical", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << cggm::error_to_json("internal", e.what());
    return kExitInternal;
  }
}
