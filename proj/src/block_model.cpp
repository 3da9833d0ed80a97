#include "cggm/block_model.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "cggm/errors.hpp"

namespace cggm {

ClusterAssignment ClusterAssignment::singletons(int p) {
  ClusterAssignment asg;
  asg.labels.resize(p);
  asg.sizes.assign(p, 1);
  asg.K = p;
  for (int j = 0; j < p; ++j) asg.labels[j] = j;
  return asg;
}

ClusterAssignment ClusterAssignment::from_labels(const std::vector<int>& raw) {
  ClusterAssignment asg;
  asg.labels.resize(raw.size());
  std::vector<int> remap;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    if (raw[j] < 0) throw InputError("cluster labels must be nonnegative");
    int found = -1;
    for (std::size_t k = 0; k < remap.size(); ++k) {
      if (remap[k] == raw[j]) {
        found = static_cast<int>(k);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(remap.size());
      remap.push_back(raw[j]);
    }
    asg.labels[j] = found;
  }
  asg.K = static_cast<int>(remap.size());
  asg.sizes.assign(asg.K, 0);
  for (int label : asg.labels) ++asg.sizes[label];
  return asg;
}

std::vector<std::vector<int>> ClusterAssignment::members() const {
  std::vector<std::vector<int>> out(K);
  for (int j = 0; j < p(); ++j) out[labels[j]].push_back(j);
  return out;
}

ClusterAggregates make_aggregates(const Eigen::MatrixXd& S,
                                  const ClusterAssignment& asg) {
  const int p = asg.p();
  if (S.rows() != p || S.cols() != p)
    throw InputError("aggregate dimensions do not match assignment");
  ClusterAggregates agg;
  agg.usu = Eigen::MatrixXd::Zero(asg.K, asg.K);
  agg.tr = Eigen::VectorXd::Zero(asg.K);
  for (int j = 0; j < p; ++j) {
    const int k = asg.labels[j];
    agg.tr[k] += S(j, j);
    for (int i = 0; i < p; ++i) agg.usu(k, asg.labels[i]) += S(j, i);
  }
  return agg;
}

void canonicalize_singletons(BlockParameters& params,
                             const std::vector<int>& sizes) {
  for (int k = 0; k < params.K(); ++k)
    if (sizes[k] == 1) params.R(k, k) = 0.0;
}

Eigen::MatrixXd materialize(const PrecisionModel& model) {
  const auto& asg = model.assignment;
  const auto& par = model.params;
  const int p = asg.p();
  Eigen::MatrixXd theta(p, p);
  for (int j = 0; j < p; ++j) {
    theta(j, j) = par.b[asg.labels[j]];
    for (int i = j + 1; i < p; ++i) {
      const double value = par.R(asg.labels[j], asg.labels[i]);
      theta(j, i) = value;
      theta(i, j) = value;
    }
  }
  return theta;
}

Eigen::MatrixXd scaled_rstar(const BlockParameters& params,
                             const std::vector<int>& sizes) {
  const int K = params.K();
  Eigen::MatrixXd M(K, K);
  for (int k = 0; k < K; ++k) {
    const double a_k = params.b[k] - params.R(k, k);
    M(k, k) = sizes[k] * params.R(k, k) + a_k;
    for (int l = k + 1; l < K; ++l) {
      const double value =
          std::sqrt(static_cast<double>(sizes[k]) * sizes[l]) * params.R(k, l);
      M(k, l) = value;
      M(l, k) = value;
    }
  }
  return M;
}

bool is_positive_definite(const BlockParameters& params,
                          const std::vector<int>& sizes) {
  const int K = params.K();
  for (int k = 0; k < K; ++k)
    if (!(params.b[k] - params.R(k, k) > 0.0)) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(scaled_rstar(params, sizes));
  return llt.info() == Eigen::Success;
}

double log_det(const BlockParameters& params, const std::vector<int>& sizes) {
  const int K = params.K();
  double result = 0.0;
  for (int k = 0; k < K; ++k) {
    const double a_k = params.b[k] - params.R(k, k);
    if (!(a_k > 0.0))
      throw NumericalError("block model is not positive definite (a_kk <= 0)");
    result += (sizes[k] - 1) * std::log(a_k);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(scaled_rstar(params, sizes));
  if (llt.info() != Eigen::Success)
    throw NumericalError("block model is not positive definite (R* factorization failed)");
  result += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return result;
}

double log_det(const PrecisionModel& model) {
  return log_det(model.params, model.assignment.sizes);
}

double trace_term(const ClusterAggregates& agg, const BlockParameters& params) {
  const int K = params.K();
  double result = 0.0;
  for (int k = 0; k < K; ++k) {
    const double a_k = params.b[k] - params.R(k, k);
    result += params.R(k, k) * agg.usu(k, k) + a_k * agg.tr[k];
    for (int l = k + 1; l < K; ++l)
      result += 2.0 * params.R(k, l) * agg.usu(k, l);
  }
  return result;
}

double trace_term(const Eigen::MatrixXd& S, const PrecisionModel& model) {
  return trace_term(make_aggregates(S, model.assignment), model.params);
}

PrecisionModel block_inverse(const PrecisionModel& model) {
  const auto& sizes = model.assignment.sizes;
  const int K = model.params.K();
  Eigen::LLT<Eigen::MatrixXd> llt(scaled_rstar(model.params, sizes));
  if (llt.info() != Eigen::Success)
    throw NumericalError("cannot invert: block model is not positive definite");
  const Eigen::MatrixXd C_inv =
      llt.solve(Eigen::MatrixXd::Identity(K, K));

  PrecisionModel inverse;
  inverse.assignment = model.assignment;
  inverse.target = model.target;
  inverse.params.b.resize(K);
  inverse.params.R.resize(K, K);
  // The centering component inverts entrywise (a_kk -> 1/a_kk) and the
  // cluster-mean component through the K x K inverse.
  for (int k = 0; k < K; ++k) {
    const double a_k = model.params.b[k] - model.params.R(k, k);
    if (!(a_k > 0.0))
      throw NumericalError("cannot invert: block model is not positive definite");
    const double sqrt_pk = std::sqrt(static_cast<double>(sizes[k]));
    const double rstar_kk = C_inv(k, k) / (sqrt_pk * sqrt_pk);
    inverse.params.R(k, k) = rstar_kk - 1.0 / (a_k * sizes[k]);
    inverse.params.b[k] = 1.0 / a_k + inverse.params.R(k, k);
    for (int l = k + 1; l < K; ++l) {
      const double sqrt_pl = std::sqrt(static_cast<double>(sizes[l]));
      const double value = C_inv(k, l) / (sqrt_pk * sqrt_pl);
      inverse.params.R(k, l) = value;
      inverse.params.R(l, k) = value;
    }
  }
  canonicalize_singletons(inverse.params, sizes);
  return inverse;
}

}  // namespace cggm
