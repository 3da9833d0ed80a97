#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "cggm/block_model.hpp"
#include "cggm/penalty.hpp"

namespace cggm {

// Working state of a fit: block parameters plus all cluster-level aggregates
// of the data and penalty weights. Aggregates are merged additively when
// clusters fuse, so no p x p rescan happens inside the solver loop.
struct ModelState {
  ClusterAssignment asg;
  Eigen::VectorXd b;    // K
  Eigen::MatrixXd R;    // K x K
  Eigen::MatrixXd s_agg;  // u_k' S u_l
  Eigen::VectorXd s_tr;   // tr S_k
  Eigen::MatrixXd w_agg;  // u_k' W u_l
  Eigen::MatrixXd z_agg;  // u_k' Z u_l

  int K() const { return asg.K; }
  PrecisionModel to_model(EstimationTarget target) const;
};

ModelState make_state(const Eigen::MatrixXd& S, const PenaltyConfig& cfg,
                      const PrecisionModel& init);

// Entries of R pinned to exactly zero during constrained refitting.
using PinMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Snapshot of everything the per-cluster objective, gradient, and Hessian
// need while cluster k's coordinates move and all others stay fixed. The
// coordinate vector has length K + 1, ordered as (b_kk, r_k by cluster index,
// r_kk).
struct ClusterLocalView {
  int k = 0;
  int K = 0;
  int p_k = 1;
  std::vector<int> sizes;
  std::vector<int> others;  // cluster indices != k, increasing
  Eigen::VectorXd b;        // all clusters
  Eigen::MatrixXd R;        // full snapshot
  Eigen::MatrixXd V;        // (K-1) x (K-1) inverse of R*_0
  // Squared cluster distance between m and l (both != k) minus its
  // p_k (r_km - r_kl)^2 term; constant while cluster k moves.
  Eigen::MatrixXd cross_base2;
  Eigen::VectorXd s_row;  // u_k' S u_l for all l
  double s_tr_k = 0.0;
  Eigen::MatrixXd w_agg;
  Eigen::VectorXd z_row;  // u_k' Z u_l
  double lambda_c = 0.0;
  double lambda_s = 0.0;
  double eps_abs = 5e-3;
  std::vector<bool> pinned;  // per coordinate, length K + 1

  Eigen::VectorXd state() const;  // current coordinates of cluster k
};

// Distances below this floor are treated as fused for derivative purposes.
inline constexpr double kDistanceFloor = 1e-12;

ClusterLocalView make_cluster_view(const ModelState& state, int k,
                                   const PenaltyConfig& cfg,
                                   const PinMask* pins = nullptr);

// Per-cluster objective at coordinates x, up to the additive constant that
// does not depend on cluster k. Returns +inf for infeasible states.
double cluster_objective(const ClusterLocalView& view,
                         const Eigen::VectorXd& x);

Eigen::VectorXd cluster_gradient(const ClusterLocalView& view,
                                 const Eigen::VectorXd& x);

Eigen::MatrixXd cluster_hessian(const ClusterLocalView& view,
                                const Eigen::VectorXd& x);

// Restriction of the per-cluster objective to a ray x + s * direction.
// Every squared distance is a quadratic in s, so the coefficients are
// computed once and each evaluation costs O(active pairs).
class RayObjective {
 public:
  RayObjective(const ClusterLocalView& view, const Eigen::VectorXd& x,
               const Eigen::VectorXd& direction);
  double operator()(double s) const;

 private:
  struct SqrtTerm {
    double coef, a, b, c;  // coef * sqrt(a + b s + c s^2)
  };
  struct AbsTerm {
    double coef, value, slope;  // coef * |value + slope s| (smoothed)
  };
  double beta_ = 0.0;
  double h0_ = 0.0, h1_ = 0.0, h2_ = 0.0;  // h(s) = h0 + h1 s - h2 s^2
  double gap0_ = 0.0, gap1_ = 0.0;
  double lin0_ = 0.0, lin1_ = 0.0;
  double eps_abs_ = 5e-3;
  std::vector<SqrtTerm> sqrt_terms_;
  std::vector<AbsTerm> abs_terms_;
};

// Full objective in O(K^2) from aggregates.
double full_objective(const ModelState& state, const PenaltyConfig& cfg);
// Convenience form that builds aggregates from scratch.
double full_objective(const PrecisionModel& model, const Eigen::MatrixXd& S,
                      const PenaltyConfig& cfg);

}  // namespace cggm
