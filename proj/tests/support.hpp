#pragma once

// Shared helpers for the test suites: independent dense-matrix oracles that
// never touch the block-parameterized code paths they are used to check, plus
// random problem generators.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "cggm/objective.hpp"
#include "cggm/penalty.hpp"
#include "cggm/rng.hpp"

namespace testsupport {

using cggm::BlockParameters;
using cggm::ClusterAssignment;
using cggm::PenaltyConfig;
using cggm::PrecisionModel;
using cggm::Rng;

inline double dense_log_det(const Eigen::MatrixXd& M) {
  return Eigen::LLT<Eigen::MatrixXd>(M)
      .matrixL()
      .toDenseMatrix()
      .diagonal()
      .array()
      .log()
      .sum() * 2.0;
}

inline double dense_trace_product(const Eigen::MatrixXd& S,
                                  const Eigen::MatrixXd& T) {
  return (S.array() * T.array()).sum();
}

// Pairwise evaluation of the full objective on a dense matrix, with the same
// smoothing of the absolute value. Works directly from the displayed
// formulas; used as the oracle for the aggregate-based evaluation.
inline double dense_objective(const Eigen::MatrixXd& theta,
                              const Eigen::MatrixXd& S,
                              const Eigen::MatrixXd& W,
                              const Eigen::MatrixXd& Z, double lambda_c,
                              double lambda_s, double eps_abs,
                              bool smoothed = true) {
  const int p = static_cast<int>(theta.rows());
  double loss = -dense_log_det(theta) + dense_trace_product(S, theta);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < j; ++i) {
      double sq = (theta(j, j) - theta(i, i)) * (theta(j, j) - theta(i, i));
      for (int m = 0; m < p; ++m) {
        if (m == j || m == i) continue;
        sq += (theta(j, m) - theta(i, m)) * (theta(j, m) - theta(i, m));
      }
      loss += lambda_c * W(i, j) * std::sqrt(sq);
    }
  }
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < p; ++i) {
      if (i == j) continue;
      const double v = smoothed
                           ? cggm::smoothed_abs(theta(i, j), eps_abs).value
                           : std::abs(theta(i, j));
      loss += lambda_s * Z(i, j) * v;
    }
  }
  return loss;
}

// Brute-force pair-counting adjusted Rand index.
inline double brute_force_ari(const std::vector<int>& a,
                              const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  double n11 = 0, n00 = 0, n10 = 0, n01 = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool same_a = a[i] == a[j];
      const bool same_b = b[i] == b[j];
      if (same_a && same_b) ++n11;
      else if (!same_a && !same_b) ++n00;
      else if (same_a) ++n10;
      else ++n01;
    }
  }
  const double total = n11 + n00 + n10 + n01;
  const double expected = (n11 + n10) * (n11 + n01) / total;
  const double max_index = 0.5 * ((n11 + n10) + (n11 + n01));
  if (max_index == expected)
    return (n10 == 0 && n01 == 0) ? 1.0 : 0.0;
  return (n11 - expected) / (max_index - expected);
}

// Random partition of p variables into exactly K nonempty clusters, already
// canonical.
inline ClusterAssignment random_assignment(int p, int K, Rng& rng) {
  std::vector<int> raw(p);
  for (int k = 0; k < K; ++k) raw[k] = k;  // every cluster occupied
  for (int j = K; j < p; ++j) raw[j] = rng.uniform_int(K);
  // shuffle positions so cluster blocks are interleaved
  for (int i = p - 1; i > 0; --i) std::swap(raw[i], raw[rng.uniform_int(i + 1)]);
  return ClusterAssignment::from_labels(raw);
}

// Random positive definite block parameters: R* is drawn PD, diagonal gaps
// a_kk from [0.3, 1.3].
inline BlockParameters random_params(const std::vector<int>& sizes, Rng& rng) {
  const int K = static_cast<int>(sizes.size());
  Eigen::MatrixXd F(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) F(i, j) = rng.normal();
  Eigen::MatrixXd C = F * F.transpose() / K + 0.4 * Eigen::MatrixXd::Identity(K, K);
  // C plays P^{1/2} R* P^{1/2}; unscale it.
  BlockParameters params;
  params.b.resize(K);
  params.R.resize(K, K);
  for (int k = 0; k < K; ++k) {
    const double a_k = 0.3 + rng.uniform();
    const double rstar_kk = C(k, k) / sizes[k];
    params.R(k, k) = rstar_kk - a_k / sizes[k];
    params.b[k] = a_k + params.R(k, k);
    for (int l = k + 1; l < K; ++l) {
      const double value =
          C(k, l) / std::sqrt(static_cast<double>(sizes[k]) * sizes[l]);
      params.R(k, l) = value;
      params.R(l, k) = value;
    }
  }
  for (int k = 0; k < K; ++k)
    if (sizes[k] == 1) params.R(k, k) = 0.0;
  return params;
}

inline PrecisionModel random_model(int p, int K, Rng& rng) {
  PrecisionModel model;
  model.assignment = random_assignment(p, K, rng);
  model.params = random_params(model.assignment.sizes, rng);
  return model;
}

inline Eigen::MatrixXd random_spd(int p, Rng& rng, double ridge = 0.5) {
  Eigen::MatrixXd F(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) F(i, j) = rng.normal();
  return F * F.transpose() / p + ridge * Eigen::MatrixXd::Identity(p, p);
}

inline Eigen::MatrixXd random_gaussian_data(int n, int p, Rng& rng) {
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

// Central finite differences of a scalar function.
template <typename F>
Eigen::VectorXd finite_difference_gradient(const F& f, const Eigen::VectorXd& x,
                                           double step = 1e-5) {
  Eigen::VectorXd grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    grad[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return grad;
}

}  // namespace testsupport
