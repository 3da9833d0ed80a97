#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cggm {

// Partition of p variables into K clusters. Labels are canonical: clusters
// are numbered by order of first appearance, so equal partitions always have
// equal label vectors.
struct ClusterAssignment {
  std::vector<int> labels;  // length p, values in [0, K)
  std::vector<int> sizes;   // length K, sizes[k] = #{j : labels[j] == k}
  int K = 0;

  int p() const { return static_cast<int>(labels.size()); }

  static ClusterAssignment singletons(int p);
  // Renumbers arbitrary labels into canonical form.
  static ClusterAssignment from_labels(const std::vector<int>& raw);

  std::vector<std::vector<int>> members() const;
  bool operator==(const ClusterAssignment& other) const {
    return labels == other.labels;
  }
};

// Block parameters of a G-block matrix: diagonal values b per cluster and the
// symmetric K x K matrix R of within/between off-diagonal values. For a
// singleton cluster r_kk is not identified and is stored as 0.
struct BlockParameters {
  Eigen::VectorXd b;  // length K
  Eigen::MatrixXd R;  // K x K, symmetric

  int K() const { return static_cast<int>(b.size()); }
};

enum class EstimationTarget { precision, covariance };

struct PrecisionModel {
  ClusterAssignment assignment;
  BlockParameters params;
  EstimationTarget target = EstimationTarget::precision;
};

// Cluster-level aggregates of a symmetric data matrix S: usu(k, l) = u_k' S u_l
// and tr(k) = trace of the diagonal block of cluster k. Computed once in
// O(p^2); merged additively when clusters fuse.
struct ClusterAggregates {
  Eigen::MatrixXd usu;  // K x K
  Eigen::VectorXd tr;   // K
};

ClusterAggregates make_aggregates(const Eigen::MatrixXd& S,
                                  const ClusterAssignment& asg);

// Canonicalizes singleton r_kk entries to zero (they do not affect the
// materialized matrix).
void canonicalize_singletons(BlockParameters& params,
                             const std::vector<int>& sizes);

// Dense p x p matrix with entries b_{k(j)} on the diagonal and r_{k(j)k(j')}
// elsewhere.
Eigen::MatrixXd materialize(const PrecisionModel& model);

// The K x K matrix P^{1/2} (R + P^{-1} A) P^{1/2} whose positive definiteness,
// together with a_kk = b_kk - r_kk > 0, is equivalent to positive definiteness
// of the materialized matrix.
Eigen::MatrixXd scaled_rstar(const BlockParameters& params,
                             const std::vector<int>& sizes);

bool is_positive_definite(const BlockParameters& params,
                          const std::vector<int>& sizes);

// log-determinant from the K x K decomposition; throws NumericalError if the
// model is not positive definite. Never forms the dense p x p matrix.
double log_det(const BlockParameters& params, const std::vector<int>& sizes);
double log_det(const PrecisionModel& model);

// tr(S Theta) from cluster aggregates.
double trace_term(const ClusterAggregates& agg, const BlockParameters& params);
double trace_term(const Eigen::MatrixXd& S, const PrecisionModel& model);

// Inverse with the same assignment; the materialization of the result equals
// the inverse of the materialization of the input.
PrecisionModel block_inverse(const PrecisionModel& model);

}  // namespace cggm
