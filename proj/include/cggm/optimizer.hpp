#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "cggm/objective.hpp"

namespace cggm {

struct SolverSettings {
  // Fusion threshold; when unset, tau * median pairwise distance of the
  // weight base matrix is used.
  std::optional<double> eps_fusion;
  double tau = 1e-3;
  double eps_conv = 1e-7;
  int max_iter = 5000;
  double golden_tol = 5e-3;
  // Verify positive definiteness after every cluster update (slow; used by
  // stress tests).
  bool check_pd_each_step = false;
};

struct MergeEvent {
  int iteration;
  int cluster_a, cluster_b;  // labels immediately before the fusion
  std::vector<int> members_a, members_b;
};

struct FitResult {
  PrecisionModel model;
  std::vector<double> objective_trace;  // one entry per outer iteration
  int iterations = 0;
  bool converged = false;
  std::vector<MergeEvent> merge_log;
  double eps_fusion_used = 0.0;
};

// Singleton initialization from S^{-1}, or (S + I)^{-1} when S is singular.
PrecisionModel initial_model(const Eigen::MatrixXd& S);

// Data-driven fusion threshold: tau * median of the pairwise distances of the
// weight base matrix.
double default_fusion_threshold(const Eigen::MatrixXd& S, double tau);

// Cyclic block coordinate descent. Each sweep visits clusters in label order,
// fusing a cluster with its nearest neighbor when their distance falls below
// the threshold and otherwise taking a safeguarded Newton step with a golden
// section line search.
FitResult fit(const Eigen::MatrixXd& S, const PenaltyConfig& cfg,
              const SolverSettings& settings = {},
              const std::optional<PrecisionModel>& init = std::nullopt);

// Nearest cluster eligible for fusion with k, if any; ties broken by smaller
// label.
std::optional<int> fusion_candidate(int k, const ModelState& state,
                                    double eps_fusion);

// Merges cluster l into cluster k in place (size-weighted parameter averages,
// additive aggregate merges) and renumbers labels canonically. Returns false
// and leaves the state untouched when the merged parameters would lose
// positive definiteness.
bool fuse(int k, int l, ModelState& state);

// Largest step size that keeps the state strictly feasible along the
// direction, capped at 1e6.
double max_step(const ClusterLocalView& view, const Eigen::VectorXd& x,
                const Eigen::VectorXd& direction);

// Golden section search on [0, s_max]; never returns a step that increases
// the objective (0 is the degenerate safe return).
double line_search(const ClusterLocalView& view, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& direction, double s_max,
                   double golden_tol);

// Maximum-likelihood refit with the assignment frozen and the given entries
// of R pinned to zero; no fusion checks, no penalties.
FitResult refit_constrained(const PrecisionModel& model,
                            const Eigen::MatrixXd& S, const PinMask& pins,
                            const SolverSettings& settings = {});

}  // namespace cggm
