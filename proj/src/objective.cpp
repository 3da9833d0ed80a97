#include "cggm/objective.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "cggm/errors.hpp"

namespace cggm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Coordinate layout for cluster k: x[0] = b_kk, x[1 + i] = r_k[others[i]],
// x[K] = r_kk.
inline double schur_term(const ClusterLocalView& view, const Eigen::VectorXd& x,
                         Eigen::VectorXd* vr_out = nullptr) {
  const int n_others = static_cast<int>(view.others.size());
  if (n_others == 0) return 0.0;
  Eigen::VectorXd r = x.segment(1, n_others);
  Eigen::VectorXd vr = view.V * r;
  if (vr_out) *vr_out = vr;
  return r.dot(vr);
}

// h = b_kk + (p_k - 1) r_kk - p_k r_k' V r_k; positive iff the update keeps
// the K x K factor positive definite.
inline double h_value(const ClusterLocalView& view, const Eigen::VectorXd& x,
                      Eigen::VectorXd* vr_out = nullptr) {
  const int K = view.K;
  return x[0] + (view.p_k - 1) * x[K] - view.p_k * schur_term(view, x, vr_out);
}

// Squared distance between cluster k (at coordinates x) and cluster l.
double moving_distance2(const ClusterLocalView& view, const Eigen::VectorXd& x,
                        int l, int l_pos) {
  const int K = view.K;
  const double db = x[0] - view.b[l];
  double sq = db * db;
  double diff = x[K] - x[1 + l_pos];
  sq += (view.p_k - 1) * diff * diff;
  diff = view.R(l, l) - x[1 + l_pos];
  sq += (view.sizes[l] - 1) * diff * diff;
  for (int i = 0; i < static_cast<int>(view.others.size()); ++i) {
    const int m = view.others[i];
    if (m == l) continue;
    diff = x[1 + i] - view.R(l, m);
    sq += view.sizes[m] * diff * diff;
  }
  return sq;
}

}  // namespace

PrecisionModel ModelState::to_model(EstimationTarget target) const {
  PrecisionModel model;
  model.assignment = asg;
  model.params.b = b;
  model.params.R = R;
  model.target = target;
  canonicalize_singletons(model.params, asg.sizes);
  return model;
}

ModelState make_state(const Eigen::MatrixXd& S, const PenaltyConfig& cfg,
                      const PrecisionModel& init) {
  const int p = init.assignment.p();
  if (S.rows() != p || S.cols() != p)
    throw InputError("data matrix dimension does not match model");
  if (cfg.clustering_weights.dim() != p || cfg.sparsity_weights.dim() != p)
    throw InputError("weight matrix dimension does not match model");
  ModelState state;
  state.asg = init.assignment;
  state.b = init.params.b;
  state.R = init.params.R;
  for (int k = 0; k < state.asg.K; ++k)
    if (state.asg.sizes[k] == 1) state.R(k, k) = 0.0;
  ClusterAggregates agg = make_aggregates(S, state.asg);
  state.s_agg = std::move(agg.usu);
  state.s_tr = std::move(agg.tr);
  state.w_agg = cfg.clustering_weights.aggregate(state.asg);
  state.z_agg = cfg.sparsity_weights.aggregate(state.asg);
  return state;
}

Eigen::VectorXd ClusterLocalView::state() const {
  Eigen::VectorXd x(K + 1);
  x[0] = b[k];
  for (int i = 0; i < static_cast<int>(others.size()); ++i)
    x[1 + i] = R(k, others[i]);
  x[K] = R(k, k);
  return x;
}

ClusterLocalView make_cluster_view(const ModelState& state, int k,
                                   const PenaltyConfig& cfg,
                                   const PinMask* pins) {
  const int K = state.K();
  ClusterLocalView view;
  view.k = k;
  view.K = K;
  view.p_k = state.asg.sizes[k];
  view.sizes = state.asg.sizes;
  view.others.reserve(K - 1);
  for (int m = 0; m < K; ++m)
    if (m != k) view.others.push_back(m);
  view.b = state.b;
  view.R = state.R;
  view.s_row = state.s_agg.row(k);
  view.s_tr_k = state.s_tr[k];
  view.w_agg = state.w_agg;
  view.z_row = state.z_agg.row(k);
  view.lambda_c = cfg.lambda_c;
  view.lambda_s = cfg.lambda_s;
  view.eps_abs = cfg.epsilon_abs;

  // V = inverse of R*_0 (R* with row/column k removed).
  if (K > 1) {
    Eigen::MatrixXd rstar0(K - 1, K - 1);
    for (int i = 0; i < K - 1; ++i) {
      const int m = view.others[i];
      const double a_m = state.b[m] - state.R(m, m);
      rstar0(i, i) = state.R(m, m) + a_m / view.sizes[m];
      for (int j = i + 1; j < K - 1; ++j) {
        const int l = view.others[j];
        rstar0(i, j) = state.R(m, l);
        rstar0(j, i) = state.R(m, l);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(rstar0);
    if (llt.info() != Eigen::Success)
      throw NumericalError("other-cluster factor lost positive definiteness");
    view.V = llt.solve(Eigen::MatrixXd::Identity(K - 1, K - 1));

    // Cache the part of each cross distance that stays constant.
    view.cross_base2 = Eigen::MatrixXd::Zero(K, K);
    BlockParameters snapshot{state.b, state.R};
    for (int i = 0; i < K - 1; ++i) {
      for (int j = i + 1; j < K - 1; ++j) {
        const int m = view.others[i];
        const int l = view.others[j];
        const double d = cluster_distance(m, l, snapshot, view.sizes);
        const double moving = state.R(k, m) - state.R(k, l);
        view.cross_base2(m, l) =
            d * d - view.p_k * moving * moving;
        view.cross_base2(l, m) = view.cross_base2(m, l);
      }
    }
  }

  view.pinned.assign(K + 1, false);
  if (pins) {
    for (int i = 0; i < K - 1; ++i)
      if ((*pins)(k, view.others[i])) view.pinned[1 + i] = true;
    if ((*pins)(k, k)) view.pinned[K] = true;
  }
  if (view.p_k == 1) view.pinned[K] = true;  // r_kk not identified
  return view;
}

double cluster_objective(const ClusterLocalView& view,
                         const Eigen::VectorXd& x) {
  const int K = view.K;
  const double a_k = x[0] - x[K];
  const double h = h_value(view, x);
  if (!(h > 0.0) || !(a_k > 0.0)) return kInf;

  double loss = -std::log(h) - (view.p_k - 1) * std::log(a_k);

  // Trace part restricted to cluster k.
  loss += x[K] * view.s_row[view.k] + a_k * view.s_tr_k;
  for (int i = 0; i < K - 1; ++i)
    loss += 2.0 * x[1 + i] * view.s_row[view.others[i]];

  if (view.lambda_c > 0.0) {
    // Pairs involving k.
    for (int i = 0; i < K - 1; ++i) {
      const int l = view.others[i];
      const double w = view.w_agg(view.k, l);
      if (w == 0.0) continue;
      loss += view.lambda_c * w * std::sqrt(moving_distance2(view, x, l, i));
    }
    // Pairs among the other clusters; they move through r_k.
    for (int i = 0; i < K - 1; ++i) {
      for (int j = i + 1; j < K - 1; ++j) {
        const int m = view.others[i];
        const int l = view.others[j];
        const double w = view.w_agg(m, l);
        if (w == 0.0) continue;
        const double moving = x[1 + i] - x[1 + j];
        const double sq = view.cross_base2(m, l) + view.p_k * moving * moving;
        loss += view.lambda_c * w * std::sqrt(std::max(sq, 0.0));
      }
    }
  }

  if (view.lambda_s > 0.0) {
    for (int i = 0; i < K - 1; ++i) {
      const double z = view.z_row[view.others[i]];
      if (z == 0.0) continue;
      loss += 2.0 * view.lambda_s * z * smoothed_abs(x[1 + i], view.eps_abs).value;
    }
    const double z_kk = view.z_row[view.k];
    if (z_kk != 0.0)
      loss += view.lambda_s * z_kk * smoothed_abs(x[K], view.eps_abs).value;
  }
  return loss;
}

Eigen::VectorXd cluster_gradient(const ClusterLocalView& view,
                                 const Eigen::VectorXd& x) {
  const int K = view.K;
  const int n_others = K - 1;
  Eigen::VectorXd vr;
  const double h = h_value(view, x, &vr);
  const double a_k = x[0] - x[K];
  if (!(h > 0.0) || !(a_k > 0.0))
    throw NumericalError("gradient requested at an infeasible state");

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(K + 1);
  const double beta = view.p_k - 1;

  // Log-determinant part.
  grad[0] = -1.0 / h - beta / a_k;
  for (int i = 0; i < n_others; ++i) grad[1 + i] = 2.0 * view.p_k * vr[i] / h;
  grad[K] = -beta / h + beta / a_k;

  // Trace part.
  grad[0] += view.s_tr_k;
  for (int i = 0; i < n_others; ++i)
    grad[1 + i] += 2.0 * view.s_row[view.others[i]];
  grad[K] += view.s_row[view.k] - view.s_tr_k;

  if (view.lambda_c > 0.0) {
    for (int i = 0; i < n_others; ++i) {
      const int l = view.others[i];
      const double w = view.w_agg(view.k, l);
      if (w == 0.0) continue;
      const double sq = moving_distance2(view, x, l, i);
      if (sq < kDistanceFloor * kDistanceFloor) continue;  // treated as fused
      const double d = std::sqrt(sq);
      const double c = view.lambda_c * w / d;
      grad[0] += c * (x[0] - view.b[l]);
      grad[K] += c * beta * (x[K] - x[1 + i]);
      grad[1 + i] += c * (beta * (x[1 + i] - x[K]) +
                          (view.sizes[l] - 1) * (x[1 + i] - view.R(l, l)));
      for (int j = 0; j < n_others; ++j) {
        if (j == i) continue;
        const int m = view.others[j];
        grad[1 + j] += c * view.sizes[m] * (x[1 + j] - view.R(l, m));
      }
    }
    for (int i = 0; i < n_others; ++i) {
      for (int j = i + 1; j < n_others; ++j) {
        const int m = view.others[i];
        const int l = view.others[j];
        const double w = view.w_agg(m, l);
        if (w == 0.0) continue;
        const double moving = x[1 + i] - x[1 + j];
        const double sq = view.cross_base2(m, l) + view.p_k * moving * moving;
        if (sq < kDistanceFloor * kDistanceFloor) continue;
        const double c = view.lambda_c * w / std::sqrt(sq);
        grad[1 + i] += c * view.p_k * moving;
        grad[1 + j] -= c * view.p_k * moving;
      }
    }
  }

  if (view.lambda_s > 0.0) {
    for (int i = 0; i < n_others; ++i) {
      const double z = view.z_row[view.others[i]];
      if (z == 0.0) continue;
      grad[1 + i] += 2.0 * view.lambda_s * z * smoothed_abs(x[1 + i], view.eps_abs).d1;
    }
    const double z_kk = view.z_row[view.k];
    if (z_kk != 0.0)
      grad[K] += view.lambda_s * z_kk * smoothed_abs(x[K], view.eps_abs).d1;
  }

  for (int i = 0; i <= K; ++i)
    if (view.pinned[i]) grad[i] = 0.0;
  return grad;
}

Eigen::MatrixXd cluster_hessian(const ClusterLocalView& view,
                                const Eigen::VectorXd& x) {
  const int K = view.K;
  const int n_others = K - 1;
  Eigen::VectorXd vr;
  const double h = h_value(view, x, &vr);
  const double a_k = x[0] - x[K];
  if (!(h > 0.0) || !(a_k > 0.0))
    throw NumericalError("Hessian requested at an infeasible state");

  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(K + 1, K + 1);
  const double beta = view.p_k - 1;
  const double h2 = h * h;
  const double a2 = a_k * a_k;

  // Log-determinant part: grad(h) grad(h)' / h^2 - hess(h) / h plus the
  // 1-D log(b - r_kk) terms.
  hess(0, 0) = 1.0 / h2 + beta / a2;
  hess(0, K) = beta / h2 - beta / a2;
  hess(K, 0) = hess(0, K);
  hess(K, K) = beta * beta / h2 + beta / a2;
  for (int i = 0; i < n_others; ++i) {
    const double dh_i = -2.0 * view.p_k * vr[i];
    hess(0, 1 + i) = dh_i / h2;
    hess(1 + i, 0) = hess(0, 1 + i);
    hess(K, 1 + i) = beta * dh_i / h2;
    hess(1 + i, K) = hess(K, 1 + i);
    for (int j = 0; j < n_others; ++j) {
      hess(1 + i, 1 + j) = 4.0 * view.p_k * view.p_k * vr[i] * vr[j] / h2 +
                           2.0 * view.p_k * view.V(i, j) / h;
    }
  }

  if (view.lambda_c > 0.0) {
    Eigen::VectorXd half_grad(K + 1);  // gradient of the squared distance / 2
    for (int i = 0; i < n_others; ++i) {
      const int l = view.others[i];
      const double w = view.w_agg(view.k, l);
      if (w == 0.0) continue;
      const double sq = moving_distance2(view, x, l, i);
      if (sq < kDistanceFloor * kDistanceFloor) continue;
      const double d = std::sqrt(sq);
      const double c = view.lambda_c * w;

      half_grad.setZero();
      half_grad[0] = x[0] - view.b[l];
      half_grad[K] = beta * (x[K] - x[1 + i]);
      half_grad[1 + i] = beta * (x[1 + i] - x[K]) +
                         (view.sizes[l] - 1) * (x[1 + i] - view.R(l, l));
      for (int j = 0; j < n_others; ++j) {
        if (j == i) continue;
        const int m = view.others[j];
        half_grad[1 + j] = view.sizes[m] * (x[1 + j] - view.R(l, m));
      }
      // Curvature of the squared distance (constant coefficients).
      hess(0, 0) += c / d;
      hess(K, K) += c * beta / d;
      hess(K, 1 + i) -= c * beta / d;
      hess(1 + i, K) -= c * beta / d;
      hess(1 + i, 1 + i) += c * (beta + view.sizes[l] - 1) / d;
      for (int j = 0; j < n_others; ++j) {
        if (j == i) continue;
        hess(1 + j, 1 + j) += c * view.sizes[view.others[j]] / d;
      }
      hess.noalias() -= (c / (d * sq)) * half_grad * half_grad.transpose();
    }
    for (int i = 0; i < n_others; ++i) {
      for (int j = i + 1; j < n_others; ++j) {
        const int m = view.others[i];
        const int l = view.others[j];
        const double w = view.w_agg(m, l);
        if (w == 0.0) continue;
        const double moving = x[1 + i] - x[1 + j];
        const double sq = view.cross_base2(m, l) + view.p_k * moving * moving;
        if (sq < kDistanceFloor * kDistanceFloor) continue;
        const double d = std::sqrt(sq);
        const double c = view.lambda_c * w;
        const double g = view.p_k * moving;  // d(sq)/dx[1+i] / 2
        const double curv = c * view.p_k / d;
        hess(1 + i, 1 + i) += curv;
        hess(1 + j, 1 + j) += curv;
        hess(1 + i, 1 + j) -= curv;
        hess(1 + j, 1 + i) -= curv;
        const double outer = c * g * g / (d * sq);
        hess(1 + i, 1 + i) -= outer;
        hess(1 + j, 1 + j) -= outer;
        hess(1 + i, 1 + j) += outer;
        hess(1 + j, 1 + i) += outer;
      }
    }
  }

  if (view.lambda_s > 0.0) {
    for (int i = 0; i < n_others; ++i) {
      const double z = view.z_row[view.others[i]];
      if (z == 0.0) continue;
      hess(1 + i, 1 + i) +=
          2.0 * view.lambda_s * z * smoothed_abs(x[1 + i], view.eps_abs).d2;
    }
    const double z_kk = view.z_row[view.k];
    if (z_kk != 0.0)
      hess(K, K) += view.lambda_s * z_kk * smoothed_abs(x[K], view.eps_abs).d2;
  }

  for (int i = 0; i <= K; ++i) {
    if (view.pinned[i]) {
      hess.row(i).setZero();
      hess.col(i).setZero();
    }
  }
  return hess;
}

RayObjective::RayObjective(const ClusterLocalView& view,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& direction) {
  const int K = view.K;
  const int n_others = K - 1;
  beta_ = view.p_k - 1;
  eps_abs_ = view.eps_abs;

  // Schur gap h(s) and the diagonal gap are the feasibility boundaries.
  h1_ = direction[0] + beta_ * direction[K];
  h0_ = x[0] + beta_ * x[K];
  h2_ = 0.0;
  if (n_others > 0) {
    const Eigen::VectorXd r = x.segment(1, n_others);
    const Eigen::VectorXd dr = direction.segment(1, n_others);
    const Eigen::VectorXd vr = view.V * r;
    const Eigen::VectorXd vdr = view.V * dr;
    h0_ -= view.p_k * r.dot(vr);
    h1_ -= 2.0 * view.p_k * dr.dot(vr);
    h2_ = view.p_k * dr.dot(vdr);
  }
  gap0_ = x[0] - x[K];
  gap1_ = direction[0] - direction[K];

  lin0_ = x[K] * view.s_row[view.k] + gap0_ * view.s_tr_k;
  lin1_ = direction[K] * view.s_row[view.k] + gap1_ * view.s_tr_k;
  for (int i = 0; i < n_others; ++i) {
    lin0_ += 2.0 * x[1 + i] * view.s_row[view.others[i]];
    lin1_ += 2.0 * direction[1 + i] * view.s_row[view.others[i]];
  }

  if (view.lambda_c > 0.0) {
    for (int i = 0; i < n_others; ++i) {
      const int l = view.others[i];
      const double w = view.w_agg(view.k, l);
      if (w == 0.0) continue;
      SqrtTerm term{view.lambda_c * w, 0.0, 0.0, 0.0};
      const auto add = [&term](double value, double slope, double weight) {
        term.a += weight * value * value;
        term.b += 2.0 * weight * value * slope;
        term.c += weight * slope * slope;
      };
      add(x[0] - view.b[l], direction[0], 1.0);
      add(x[K] - x[1 + i], direction[K] - direction[1 + i], beta_);
      add(x[1 + i] - view.R(l, l), direction[1 + i], view.sizes[l] - 1);
      for (int j = 0; j < n_others; ++j) {
        if (j == i) continue;
        add(x[1 + j] - view.R(l, view.others[j]), direction[1 + j],
            view.sizes[view.others[j]]);
      }
      sqrt_terms_.push_back(term);
    }
    for (int i = 0; i < n_others; ++i) {
      for (int j = i + 1; j < n_others; ++j) {
        const int m = view.others[i];
        const int l = view.others[j];
        const double w = view.w_agg(m, l);
        if (w == 0.0) continue;
        const double value = x[1 + i] - x[1 + j];
        const double slope = direction[1 + i] - direction[1 + j];
        sqrt_terms_.push_back(
            {view.lambda_c * w,
             view.cross_base2(m, l) + view.p_k * value * value,
             2.0 * view.p_k * value * slope, view.p_k * slope * slope});
      }
    }
  }

  if (view.lambda_s > 0.0) {
    for (int i = 0; i < n_others; ++i) {
      const double z = view.z_row[view.others[i]];
      if (z == 0.0) continue;
      abs_terms_.push_back(
          {2.0 * view.lambda_s * z, x[1 + i], direction[1 + i]});
    }
    const double z_kk = view.z_row[view.k];
    if (z_kk != 0.0)
      abs_terms_.push_back({view.lambda_s * z_kk, x[K], direction[K]});
  }
}

double RayObjective::operator()(double s) const {
  const double h = h0_ + s * (h1_ - s * h2_);
  const double gap = gap0_ + s * gap1_;
  if (!(h > 0.0) || !(gap > 0.0))
    return std::numeric_limits<double>::infinity();
  double loss = -std::log(h) - beta_ * std::log(gap) + lin0_ + s * lin1_;
  for (const SqrtTerm& term : sqrt_terms_)
    loss += term.coef * std::sqrt(std::max(term.a + s * (term.b + s * term.c),
                                           0.0));
  for (const AbsTerm& term : abs_terms_)
    loss += term.coef *
            smoothed_abs(term.value + s * term.slope, eps_abs_).value;
  return loss;
}

double full_objective(const ModelState& state, const PenaltyConfig& cfg) {
  const int K = state.K();
  BlockParameters params{state.b, state.R};
  double loss = -log_det(params, state.asg.sizes);
  loss += trace_term(ClusterAggregates{state.s_agg, state.s_tr}, params);
  if (cfg.lambda_c > 0.0) {
    for (int k = 0; k < K; ++k)
      for (int l = k + 1; l < K; ++l)
        if (state.w_agg(k, l) != 0.0)
          loss += cfg.lambda_c * state.w_agg(k, l) *
                  cluster_distance(k, l, params, state.asg.sizes);
  }
  if (cfg.lambda_s > 0.0) {
    for (int k = 0; k < K; ++k) {
      if (state.z_agg(k, k) != 0.0)
        loss += cfg.lambda_s * state.z_agg(k, k) *
                smoothed_abs(state.R(k, k), cfg.epsilon_abs).value;
      for (int l = k + 1; l < K; ++l)
        if (state.z_agg(k, l) != 0.0)
          loss += 2.0 * cfg.lambda_s * state.z_agg(k, l) *
                  smoothed_abs(state.R(k, l), cfg.epsilon_abs).value;
    }
  }
  return loss;
}

double full_objective(const PrecisionModel& model, const Eigen::MatrixXd& S,
                      const PenaltyConfig& cfg) {
  return full_objective(make_state(S, cfg, model), cfg);
}

}  // namespace cggm
