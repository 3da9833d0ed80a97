#include "cggm/model_selection.hpp"

#include <algorithm>
#include <cmath>

#include "cggm/errors.hpp"
#include "cggm/parallel.hpp"
#include "cggm/rng.hpp"

namespace cggm {

std::vector<double> lambda_s_grid(const Eigen::MatrixXd& S) {
  const int p = static_cast<int>(S.rows());
  double lambda_max = 0.0;
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      lambda_max = std::max(lambda_max, std::abs(S(i, j)));
  std::vector<double> grid(10);
  double numerator = 0.0;  // 2^i - 1
  for (int i = 0; i < 10; ++i) {
    grid[i] = lambda_max * numerator / 511.0;
    numerator = 2.0 * numerator + 1.0;
  }
  return grid;
}

double cv_score(const std::vector<PrecisionModel>& fold_models,
                const std::vector<Eigen::MatrixXd>& fold_covariances) {
  if (fold_models.empty() || fold_models.size() != fold_covariances.size())
    throw InputError("cv_score requires matched model/covariance pairs");
  double total = 0.0;
  for (std::size_t g = 0; g < fold_models.size(); ++g)
    total += -log_det(fold_models[g]) +
             trace_term(fold_covariances[g], fold_models[g]);
  return total / static_cast<double>(fold_models.size());
}

std::vector<std::vector<int>> make_folds(int n, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cross-validation requires at least 2 folds");
  if (n < folds) throw InputError("fewer observations than folds");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  std::vector<std::vector<int>> result(folds);
  for (int i = 0; i < n; ++i) result[i % folds].push_back(order[i]);
  for (auto& fold : result) std::sort(fold.begin(), fold.end());
  return result;
}

Eigen::MatrixXd column_center(const Eigen::MatrixXd& X, bool standardize) {
  Eigen::MatrixXd out = X.rowwise() - X.colwise().mean();
  if (standardize) {
    const int n = static_cast<int>(X.rows());
    for (int j = 0; j < out.cols(); ++j) {
      const double sd = std::sqrt(out.col(j).squaredNorm() / n);
      if (sd > 0.0) out.col(j) /= sd;
    }
  }
  return out;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X_centered) {
  const int n = static_cast<int>(X_centered.rows());
  return X_centered.transpose() * X_centered / static_cast<double>(n);
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                          const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = X.row(rows[i]);
  return out;
}

// Score curve of one fold for one (knn, phi, lambda_s) combination: the
// held-out likelihood score at every path position.
struct FoldCurve {
  std::vector<double> lambdas;
  std::vector<double> scores;
};

double held_out_score(const PrecisionModel& model,
                      const Eigen::MatrixXd& score_matrix) {
  return -log_det(model) + trace_term(score_matrix, model);
}

// Largest path position <= lambda; paths start at the common first position
// so a match always exists.
double score_at(const FoldCurve& curve, double lambda) {
  double best = curve.scores.front();
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i) {
    if (curve.lambdas[i] <= lambda * (1.0 + 1e-12))
      best = curve.scores[i];
    else
      break;
  }
  return best;
}

}  // namespace

CvResult select(const Eigen::MatrixXd& X, const CvPlan& plan,
                const SolverSettings& settings) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (plan.knn_grid.empty() || plan.phi_grid.empty())
    throw InputError("empty hyperparameter grid");
  const bool covariance_mode = plan.target == EstimationTarget::covariance;

  const Eigen::MatrixXd Xc = column_center(X, plan.standardize);
  const Eigen::MatrixXd S_full = sample_covariance(Xc);
  const std::vector<double> s_grid =
      plan.lambda_s_grid.empty() ? lambda_s_grid(covariance_mode
                                                     ? weight_base_matrix(S_full)
                                                     : S_full)
                                 : plan.lambda_s_grid;

  CvResult result;
  result.fold_indices = make_folds(n, plan.folds, plan.seed);

  // Per-fold solver inputs. In covariance mode the estimator runs on the
  // inverse of the training covariance and is scored against the inverse of
  // the fold covariance.
  const int G = plan.folds;
  std::vector<Eigen::MatrixXd> train_input(G), score_input(G);
  for (int g = 0; g < G; ++g) {
    std::vector<int> train_rows;
    train_rows.reserve(n - result.fold_indices[g].size());
    std::vector<bool> in_fold(n, false);
    for (int row : result.fold_indices[g]) in_fold[row] = true;
    for (int i = 0; i < n; ++i)
      if (!in_fold[i]) train_rows.push_back(i);

    const Eigen::MatrixXd X_train = column_center(take_rows(Xc, train_rows));
    for (int j = 0; j < p; ++j) {
      if (X_train.col(j).cwiseAbs().maxCoeff() == 0.0)
        throw InputError("degenerate fold " + std::to_string(g) +
                         ": column " + std::to_string(j) +
                         " is constant on the training split");
    }
    const Eigen::MatrixXd X_fold =
        column_center(take_rows(Xc, result.fold_indices[g]));
    const Eigen::MatrixXd S_train = sample_covariance(X_train);
    const Eigen::MatrixXd S_fold = sample_covariance(X_fold);
    train_input[g] = covariance_mode ? weight_base_matrix(S_train) : S_train;
    score_input[g] = covariance_mode ? weight_base_matrix(S_fold) : S_fold;
  }

  // Work items: fold x knn x phi; the sparsity grid reuses the weights.
  const int nk = static_cast<int>(plan.knn_grid.size());
  const int nphi = static_cast<int>(plan.phi_grid.size());
  const int ns = static_cast<int>(s_grid.size());
  std::vector<std::vector<FoldCurve>> curves(G * nk * nphi);
  parallel_for(G * nk * nphi, [&](int item) {
    const int g = item / (nk * nphi);
    const int ik = (item / nphi) % nk;
    const int iphi = item % nphi;
    const SymmetricWeights W = build_weights(
        train_input[g], plan.knn_grid[ik], plan.phi_grid[iphi]);
    std::vector<FoldCurve> item_curves(ns);
    for (int is = 0; is < ns; ++is) {
      PenaltyConfig cfg;
      cfg.clustering_weights = W;
      cfg.sparsity_weights = SymmetricWeights::ones(p);
      cfg.lambda_s = s_grid[is];
      cfg.knn = plan.knn_grid[ik];
      cfg.phi = plan.phi_grid[iphi];
      // Fold paths are scoring devices; run them at the protocol tolerance.
      PathSettings fold_path;
      fold_path.tight_convergence = false;
      const ClusterpathSolution path =
          compute_path(train_input[g], cfg, settings, fold_path);
      FoldCurve curve;
      for (const auto& point : path.points) {
        curve.lambdas.push_back(point.lambda_c);
        curve.scores.push_back(
            held_out_score(point.fit.model, score_input[g]));
      }
      item_curves[is] = std::move(curve);
    }
    curves[item] = std::move(item_curves);
  });

  // Align each fold's path on the union of its positions and average.
  bool have_best = false;
  for (int ik = 0; ik < nk; ++ik) {
    for (int iphi = 0; iphi < nphi; ++iphi) {
      for (int is = 0; is < ns; ++is) {
        std::vector<double> union_lambdas;
        for (int g = 0; g < G; ++g) {
          const auto& curve = curves[(g * nk + ik) * nphi + iphi][is];
          union_lambdas.insert(union_lambdas.end(), curve.lambdas.begin(),
                               curve.lambdas.end());
        }
        std::sort(union_lambdas.begin(), union_lambdas.end());
        union_lambdas.erase(
            std::unique(union_lambdas.begin(), union_lambdas.end()),
            union_lambdas.end());
        for (double lambda : union_lambdas) {
          CvEntry entry;
          entry.knn = plan.knn_grid[ik];
          entry.phi = plan.phi_grid[iphi];
          entry.lambda_s = s_grid[is];
          entry.lambda_c = lambda;
          double total = 0.0;
          for (int g = 0; g < G; ++g)
            total += score_at(curves[(g * nk + ik) * nphi + iphi][is], lambda);
          entry.mean_score = total / G;
          entry.folds_scored = G;
          result.table.push_back(entry);
          // Ties resolve toward the more aggregated, sparser model.
          const bool better =
              !have_best || entry.mean_score < result.best.mean_score ||
              (entry.mean_score == result.best.mean_score &&
               (entry.lambda_c > result.best.lambda_c ||
                (entry.lambda_c == result.best.lambda_c &&
                 entry.lambda_s > result.best.lambda_s)));
          if (better) {
            result.best = entry;
            have_best = true;
          }
        }
      }
    }
  }
  if (!have_best) throw NumericalError("cross-validation produced no scores");

  // Full-data fit and refit at the selected tuning.
  const Eigen::MatrixXd full_input =
      covariance_mode ? weight_base_matrix(S_full) : S_full;
  PenaltyConfig cfg;
  cfg.clustering_weights =
      build_weights(full_input, result.best.knn, result.best.phi);
  cfg.sparsity_weights = SymmetricWeights::ones(p);
  cfg.lambda_s = result.best.lambda_s;
  cfg.knn = result.best.knn;
  cfg.phi = result.best.phi;
  result.raw_fit =
      fit_at_path_position(full_input, cfg, result.best.lambda_c, settings);
  result.raw_fit.model.target = plan.target;
  result.refit_fit = refit(result.raw_fit.model, full_input, settings,
                           cfg.epsilon_abs);
  result.refit_fit.model.target = plan.target;
  return result;
}

}  // namespace cggm
