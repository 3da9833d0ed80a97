#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cggm/block_model.hpp"

namespace cggm {

// Sparse symmetric matrix with zero diagonal, stored as upper-triangle
// triplets sorted by (i, j). Entries not present are structural zeros.
class SymmetricWeights {
 public:
  struct Entry {
    int i, j;  // i < j
    double w;
  };

  SymmetricWeights() = default;
  explicit SymmetricWeights(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Inserts or overwrites the (i, j) entry; zero diagonal is enforced.
  void set(int i, int j, double w);
  double sum() const;  // over unordered pairs
  int component_count() const;
  bool is_connected() const { return component_count() <= 1; }
  Eigen::MatrixXd dense() const;

  // All off-diagonal pairs set to 1.
  static SymmetricWeights ones(int dim);
  static SymmetricWeights from_dense(const Eigen::MatrixXd& M,
                                     double tolerance = 0.0);

  // K x K aggregate u_k' W u_l under a cluster assignment.
  Eigen::MatrixXd aggregate(const ClusterAssignment& asg) const;

  // Triplet CSV with header "i,j,value"; indices are 0-based.
  std::string to_csv() const;
  static SymmetricWeights from_csv(const std::string& text, int dim);

 private:
  int dim_ = 0;
  std::vector<Entry> entries_;
};

struct PenaltyConfig {
  SymmetricWeights clustering_weights;  // W
  SymmetricWeights sparsity_weights;    // Z; defaults to all-ones off-diagonal
  double lambda_c = 0.0;
  double lambda_s = 0.0;
  double phi = 1.0;
  int knn = 5;
  double epsilon_abs = 5e-3;  // smoothing width of the absolute value
};

// Distance between columns j and j' of a symmetric matrix, comparing the two
// diagonal entries and all shared off-diagonal entries; the (j, j') entry
// itself is disregarded.
double pairwise_distance(const Eigen::MatrixXd& M, int j, int j_prime);

// All pairwise squared distances at once (the building block for weights and
// fusion thresholds); O(p^3).
Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd& M);

// Gaussian k-NN weights on the inverse of S ((S + I)^{-1} when S is not
// invertible), with the edge set repaired to a single connected component by
// adding minimum-spanning-tree edges.
SymmetricWeights build_weights(const Eigen::MatrixXd& S, int knn, double phi);

// Same construction, starting from the already-inverted comparison matrix.
SymmetricWeights build_weights_from_inverse(const Eigen::MatrixXd& M, int knn,
                                            double phi);

// Inverse used for weights and fusion thresholds: S^{-1} if the Cholesky
// succeeds, (S + I)^{-1} otherwise.
Eigen::MatrixXd weight_base_matrix(const Eigen::MatrixXd& S);

// Distance between clusters k and l in block coordinates. At the singleton
// initialization this coincides exactly with pairwise_distance on the
// materialized matrix.
double cluster_distance(int k, int l, const BlockParameters& params,
                        const std::vector<int>& sizes);

double aggregate_weight(int k, int l, const SymmetricWeights& W,
                        const ClusterAssignment& asg);

struct SmoothedAbs {
  double value;
  double d1;
  double d2;
};

// (x^2 + eps^2) / (2 eps) inside |x| < eps, |x| outside; continuously
// differentiable at the seam.
SmoothedAbs smoothed_abs(double x, double eps);

}  // namespace cggm
