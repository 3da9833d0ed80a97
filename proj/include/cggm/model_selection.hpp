#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cggm/clusterpath.hpp"

namespace cggm {

struct CvPlan {
  int folds = 5;
  std::vector<int> knn_grid{5};
  std::vector<double> phi_grid{1.0};
  // Empty: derived from the full-data covariance via lambda_s_grid().
  std::vector<double> lambda_s_grid;
  EstimationTarget target = EstimationTarget::precision;
  std::uint64_t seed = 0;
  bool standardize = false;
};

struct CvEntry {
  int knn = 0;
  double phi = 0.0;
  double lambda_s = 0.0;
  double lambda_c = 0.0;  // path position (rescaled tuning scale)
  double mean_score = 0.0;
  int folds_scored = 0;
};

struct CvResult {
  CvEntry best;
  FitResult raw_fit;     // full-data fit at the selected tuning
  FitResult refit_fit;   // constrained maximum-likelihood refit
  std::vector<CvEntry> table;
  std::vector<std::vector<int>> fold_indices;
};

// Ten-value sparsity grid anchored at the smallest value that zeroes all
// off-diagonal entries: max |S_jj'| over j != j'. Steps double, fractions
// (2^i - 1)/511 for i = 0..9.
std::vector<double> lambda_s_grid(const Eigen::MatrixXd& S);

// Mean held-out likelihood-based score over matched (model, fold covariance)
// pairs.
double cv_score(const std::vector<PrecisionModel>& fold_models,
                const std::vector<Eigen::MatrixXd>& fold_covariances);

// Deterministic fold partition of n rows.
std::vector<std::vector<int>> make_folds(int n, int folds, std::uint64_t seed);

Eigen::MatrixXd column_center(const Eigen::MatrixXd& X, bool standardize = false);
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X_centered);

// Grid search over (knn, phi, lambda_s) x the automated lambda_c sequence,
// scored by G-fold cross-validation, followed by a full-data fit and refit at
// the selected tuning. In covariance mode the solver input is the inverse of
// the (training) covariance and the fitted object estimates the covariance.
CvResult select(const Eigen::MatrixXd& X, const CvPlan& plan,
                const SolverSettings& settings = {});

}  // namespace cggm
