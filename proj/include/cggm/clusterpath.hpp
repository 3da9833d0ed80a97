#pragma once

#include <string>
#include <vector>

#include "cggm/optimizer.hpp"

namespace cggm {

struct PathPoint {
  double lambda_c = 0.0;  // position on the rescaled tuning scale
  double gamma_c = 0.0;   // raw multiplier applied to the aggregation penalty
  FitResult fit;
  int K = 0;
};

struct PathMerge {
  double lambda_c = 0.0;
  std::vector<int> members_a, members_b;
};

struct ClusterpathSolution {
  std::vector<PathPoint> points;  // increasing lambda_c, K non-increasing
  std::vector<PathMerge> merges;  // binary merge hierarchy, leaves = variables
  double kappa = 0.0;
};

struct PathSettings {
  double lambda_init = 0.5;
  double growth = 1.5;
  double refine_threshold = 0.01;  // relative Frobenius change between neighbors
  int max_refine_depth = 12;
  int max_rough_steps = 200;
  // Exported paths converge every point to objective-level stability so the
  // smoothness criterion measures the solution rather than solver residue.
  // Paths used only as cross-validation scoring devices run at the caller's
  // tolerance instead.
  bool tight_convergence = true;
};

// Rescaling constant: 1 / (sqrt(p - 1) * sum of clustering weights). The raw
// penalty multiplier for a path position lambda is gamma = p * kappa * lambda.
double path_kappa(int p, const SymmetricWeights& W);

// Automated lambda_c sequence with warm starts: geometric growth until the
// minimum cluster count is reached, then bisection refinement until adjacent
// solutions differ by at most the refinement threshold.
ClusterpathSolution compute_path(const Eigen::MatrixXd& S,
                                 const PenaltyConfig& base_cfg,
                                 const SolverSettings& settings = {},
                                 const PathSettings& path_settings = {});

// Fit at one position of the rescaled tuning scale, warm-started along the
// rough sequence below it.
FitResult fit_at_path_position(const Eigen::MatrixXd& S,
                               const PenaltyConfig& base_cfg, double lambda_c,
                               const SolverSettings& settings = {},
                               const PathSettings& path_settings = {});

struct DendrogramNode {
  int id = 0;              // leaves: 0..p-1; internal nodes follow
  int child_a = -1, child_b = -1;
  double height = 0.0;     // lambda_c at which the merge is first present
  std::vector<int> members;
};

struct Dendrogram {
  int p = 0;
  std::vector<std::string> leaf_names;
  std::vector<DendrogramNode> nodes;  // internal nodes, in merge order
};

Dendrogram dendrogram(const ClusterpathSolution& path,
                      const std::vector<std::string>& names = {});

std::string to_newick(const Dendrogram& tree);

// Maximum-likelihood refit constrained by the model's clustering and by the
// sparsity pattern read off at the smoothing threshold.
FitResult refit(const PrecisionModel& model, const Eigen::MatrixXd& S,
                const SolverSettings& settings = {},
                double zero_threshold = 5e-3);

// Entries of R reported as zero at the given threshold.
PinMask zero_pattern(const BlockParameters& params, double threshold);

}  // namespace cggm
