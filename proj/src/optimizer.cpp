#include "cggm/optimizer.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "cggm/errors.hpp"

namespace cggm {

namespace {

constexpr double kStepCap = 1e6;

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Newton direction with a Levenberg safeguard: escalate a ridge until the
// direction is a descent direction, falling back to steepest descent.
Eigen::VectorXd descent_direction(const Eigen::MatrixXd& hess,
                                  const Eigen::VectorXd& grad,
                                  const std::vector<bool>& pinned) {
  const int n = static_cast<int>(grad.size());
  std::vector<int> free_idx;
  free_idx.reserve(n);
  for (int i = 0; i < n; ++i)
    if (!pinned[i]) free_idx.push_back(i);
  const int m = static_cast<int>(free_idx.size());
  Eigen::VectorXd direction = Eigen::VectorXd::Zero(n);
  if (m == 0) return direction;

  Eigen::MatrixXd H(m, m);
  Eigen::VectorXd g(m);
  for (int i = 0; i < m; ++i) {
    g[i] = grad[free_idx[i]];
    for (int j = 0; j < m; ++j) H(i, j) = hess(free_idx[i], free_idx[j]);
  }

  Eigen::VectorXd d;
  double ridge = 0.0;
  while (true) {
    Eigen::MatrixXd H_try = H;
    if (ridge > 0.0) H_try.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H_try);
    if (ldlt.info() == Eigen::Success) {
      d = ldlt.solve(-g);
      if (d.allFinite() && d.dot(g) < 0.0) break;
    }
    ridge = ridge == 0.0 ? 1e-6 : ridge * 10.0;
    if (ridge > 1e8) {
      d = -g;
      break;
    }
  }
  for (int i = 0; i < m; ++i) direction[free_idx[i]] = d[i];
  return direction;
}

void apply_cluster_state(ModelState& state, const ClusterLocalView& view,
                         const Eigen::VectorXd& x) {
  const int k = view.k;
  state.b[k] = x[0];
  for (int i = 0; i < static_cast<int>(view.others.size()); ++i) {
    const int m = view.others[i];
    state.R(k, m) = x[1 + i];
    state.R(m, k) = x[1 + i];
  }
  state.R(k, k) = x[view.K];
}

struct SweepOptions {
  bool allow_fusion = true;
  const PinMask* pins = nullptr;
};

// One full pass over all clusters; returns the number of fusions performed.
int sweep(ModelState& state, const PenaltyConfig& cfg,
          const SolverSettings& settings, double eps_fusion, int iteration,
          const SweepOptions& options, std::vector<MergeEvent>& merge_log) {
  int fusions = 0;
  int k = 0;
  while (k < state.K()) {
    bool advance = true;
    bool do_newton = true;
    if (options.allow_fusion && state.K() > 1) {
      if (auto candidate = fusion_candidate(k, state, eps_fusion)) {
        const int l = *candidate;
        MergeEvent event;
        event.iteration = iteration;
        event.cluster_a = k;
        event.cluster_b = l;
        auto members = state.asg.members();
        event.members_a = members[k];
        event.members_b = members[l];
        if (fuse(k, l, state)) {
          merge_log.push_back(std::move(event));
          ++fusions;
          do_newton = false;
          // Merging into a smaller index removes slot k; the next cluster
          // slides into it.
          if (l < k) advance = false;
        }
      }
    }
    if (do_newton) {
      ClusterLocalView view = make_cluster_view(state, k, cfg, options.pins);
      const Eigen::VectorXd x = view.state();
      const Eigen::VectorXd grad = cluster_gradient(view, x);
      const Eigen::MatrixXd hess = cluster_hessian(view, x);
      const Eigen::VectorXd direction =
          descent_direction(hess, grad, view.pinned);
      if (direction.squaredNorm() > 0.0) {
        const double s_max = max_step(view, x, direction);
        const double step =
            line_search(view, x, direction, s_max, settings.golden_tol);
        if (step > 0.0) apply_cluster_state(state, view, x + step * direction);
      }
    }
    if (settings.check_pd_each_step) {
      if (!is_positive_definite({state.b, state.R}, state.asg.sizes))
        throw NumericalError("positive definiteness lost during sweep");
    }
    if (advance) ++k;
  }
  return fusions;
}

FitResult run_descent(ModelState state, const PenaltyConfig& cfg,
                      const SolverSettings& settings, double eps_fusion,
                      const SweepOptions& options, EstimationTarget target) {
  FitResult result;
  result.eps_fusion_used = eps_fusion;
  double loss = full_objective(state, cfg);
  if (!std::isfinite(loss))
    throw NumericalError("objective is not finite at the initial model");
  result.objective_trace.push_back(loss);

  int t = 1;
  int quiet_sweeps = 0;
  while (t <= settings.max_iter) {
    ++t;
    const int fusions =
        sweep(state, cfg, settings, eps_fusion, t, options, result.merge_log);
    const double new_loss = full_objective(state, cfg);
    if (!std::isfinite(new_loss))
      throw NumericalError("objective became non-finite during optimization");
    result.objective_trace.push_back(new_loss);
    const double improvement = loss - new_loss;
    loss = new_loss;
    // A sweep that changed the cluster structure never counts as converged,
    // and a single near-stationary sweep can precede a large superlinear
    // drop; require two quiet sweeps in a row.
    if (fusions == 0 &&
        improvement <= settings.eps_conv * std::max(std::abs(new_loss), 1.0)) {
      if (++quiet_sweeps >= 2) {
        result.converged = true;
        break;
      }
    } else {
      quiet_sweeps = 0;
    }
  }
  result.iterations = static_cast<int>(result.objective_trace.size()) - 1;
  result.model = state.to_model(target);
  return result;
}

}  // namespace

PrecisionModel initial_model(const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd M = weight_base_matrix(S);
  const int p = static_cast<int>(M.rows());
  PrecisionModel model;
  model.assignment = ClusterAssignment::singletons(p);
  model.params.b = M.diagonal();
  model.params.R = M;
  model.params.R.diagonal().setZero();
  return model;
}

double default_fusion_threshold(const Eigen::MatrixXd& S, double tau) {
  const Eigen::MatrixXd D2 =
      pairwise_squared_distances(weight_base_matrix(S));
  const int p = static_cast<int>(D2.rows());
  std::vector<double> distances;
  distances.reserve(p * (p - 1) / 2);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) distances.push_back(std::sqrt(D2(i, j)));
  const double m = median(std::move(distances));
  // Degenerate geometry (median distance zero) falls back to the absolute
  // threshold tau.
  return m > 0.0 ? tau * m : tau;
}

std::optional<int> fusion_candidate(int k, const ModelState& state,
                                    double eps_fusion) {
  const int K = state.K();
  if (K < 2) return std::nullopt;
  const BlockParameters params{state.b, state.R};
  int best = -1;
  double best_distance = std::numeric_limits<double>::infinity();
  for (int l = 0; l < K; ++l) {
    if (l == k) continue;
    const double d = cluster_distance(k, l, params, state.asg.sizes);
    if (d < best_distance) {
      best_distance = d;
      best = l;
    }
  }
  if (best >= 0 && best_distance <= eps_fusion) return best;
  return std::nullopt;
}

bool fuse(int k, int l, ModelState& state) {
  if (k == l) throw InputError("cannot fuse a cluster with itself");
  const int K = state.K();
  const int a = std::min(k, l);
  const int removed = std::max(k, l);
  const double p_k = state.asg.sizes[k];
  const double p_l = state.asg.sizes[l];
  const double p_new = p_k + p_l;

  // Size-weighted parameter averages; the within value averages all
  // within-cluster off-diagonal entries of the merged block.
  Eigen::VectorXd b_new(K - 1);
  Eigen::MatrixXd R_new(K - 1, K - 1);
  std::vector<int> sizes_new(K - 1);
  auto new_index = [&](int m) { return m < removed ? m : m - 1; };
  const double pairs_k = p_k * (p_k - 1) / 2.0;
  const double pairs_l = p_l * (p_l - 1) / 2.0;
  const double pairs_cross = p_k * p_l;
  const double r_within =
      (pairs_k * state.R(k, k) + pairs_l * state.R(l, l) +
       pairs_cross * state.R(k, l)) /
      (pairs_k + pairs_l + pairs_cross);

  for (int m = 0; m < K; ++m) {
    if (m == removed) continue;
    const int mi = new_index(m);
    sizes_new[mi] = m == a ? static_cast<int>(p_new) : state.asg.sizes[m];
    b_new[mi] = m == a ? (p_k * state.b[k] + p_l * state.b[l]) / p_new
                       : state.b[m];
    for (int m2 = m; m2 < K; ++m2) {
      if (m2 == removed) continue;
      const int mj = new_index(m2);
      double value;
      if (m == a && m2 == a)
        value = r_within;
      else if (m == a)
        value = (p_k * state.R(k, m2) + p_l * state.R(l, m2)) / p_new;
      else if (m2 == a)
        value = (p_k * state.R(m, k) + p_l * state.R(m, l)) / p_new;
      else
        value = state.R(m, m2);
      R_new(mi, mj) = value;
      R_new(mj, mi) = value;
    }
  }

  if (!is_positive_definite({b_new, R_new}, sizes_new)) return false;

  // Aggregates merge additively.
  auto merge_matrix = [&](const Eigen::MatrixXd& M) {
    Eigen::MatrixXd out(K - 1, K - 1);
    for (int m = 0; m < K; ++m) {
      if (m == removed) continue;
      for (int m2 = 0; m2 < K; ++m2) {
        if (m2 == removed) continue;
        double value = M(m, m2);
        if (m == a) value += M(removed, m2);
        if (m2 == a) value += M(m, removed);
        if (m == a && m2 == a) value += M(removed, removed);
        out(new_index(m), new_index(m2)) = value;
      }
    }
    return out;
  };
  state.s_agg = merge_matrix(state.s_agg);
  state.w_agg = merge_matrix(state.w_agg);
  state.z_agg = merge_matrix(state.z_agg);
  Eigen::VectorXd tr_new(K - 1);
  for (int m = 0; m < K; ++m) {
    if (m == removed) continue;
    tr_new[new_index(m)] =
        m == a ? state.s_tr[k] + state.s_tr[l] : state.s_tr[m];
  }
  state.s_tr = std::move(tr_new);
  state.b = std::move(b_new);
  state.R = std::move(R_new);
  state.asg.sizes = std::move(sizes_new);
  state.asg.K = K - 1;
  for (auto& label : state.asg.labels) {
    if (label == removed) label = a;
    if (label > removed) --label;
  }
  return true;
}

double max_step(const ClusterLocalView& view, const Eigen::VectorXd& x,
                const Eigen::VectorXd& direction) {
  const int K = view.K;
  const int n_others = K - 1;
  double s_max = kStepCap;

  // Quadratic boundary of the Schur term: h0 + c1 s - c2 s^2 > 0.
  Eigen::VectorXd vr;
  const double h0 = x[0] + (view.p_k - 1) * x[K];
  double schur = 0.0;
  double c1 = direction[0] + (view.p_k - 1) * direction[K];
  double c2 = 0.0;
  if (n_others > 0) {
    const Eigen::VectorXd r = x.segment(1, n_others);
    const Eigen::VectorXd dr = direction.segment(1, n_others);
    const Eigen::VectorXd Vr = view.V * r;
    const Eigen::VectorXd Vdr = view.V * dr;
    schur = view.p_k * r.dot(Vr);
    c1 -= 2.0 * view.p_k * dr.dot(Vr);
    c2 = view.p_k * dr.dot(Vdr);
  }
  const double h_at_zero = h0 - schur;
  if (c2 > 1e-300) {
    const double disc = c1 * c1 + 4.0 * c2 * h_at_zero;
    s_max = std::min(s_max, (c1 + std::sqrt(std::max(disc, 0.0))) / (2.0 * c2));
  } else if (c1 < 0.0) {
    s_max = std::min(s_max, -h_at_zero / c1);
  }

  // Linear boundary of the diagonal gap b_kk - r_kk.
  const double gap = x[0] - x[K];
  const double dgap = direction[0] - direction[K];
  if (dgap < 0.0) s_max = std::min(s_max, -gap / dgap);

  return std::max(s_max, 0.0);
}

double line_search(const ClusterLocalView& view, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& direction, double s_max,
                   double golden_tol) {
  if (!(s_max > 0.0)) return 0.0;
  const RayObjective value_at(view, x, direction);
  const double f0 = value_at(0.0);
  constexpr double kGolden = 0.6180339887498949;

  // The Newton step has natural length 1; start from a bracket of that scale
  // and expand toward s_max only when the minimum presses against the edge.
  double best = 0.0;
  double f_best = f0;
  double hi_limit = std::min(s_max, 4.0);
  while (true) {
    double lo = 0.0, hi = hi_limit;
    double c = hi - kGolden * (hi - lo);
    double d = lo + kGolden * (hi - lo);
    double fc = value_at(c);
    double fd = value_at(d);
    const double tol = golden_tol * std::min(hi_limit, 1.0);
    while (hi - lo > tol) {
      if (fc < fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - kGolden * (hi - lo);
        fc = value_at(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + kGolden * (hi - lo);
        fd = value_at(d);
      }
    }
    best = fc < fd ? c : d;
    f_best = std::min(fc, fd);
    if (best < 0.8 * hi_limit || hi_limit >= s_max) break;
    hi_limit = std::min(hi_limit * 8.0, s_max);
  }

  // The exact Newton step is optimal to second order; prefer it when it
  // wins, which restores the fast tail that interval shrinking alone loses.
  if (s_max > 1.0) {
    const double f_unit = value_at(1.0);
    if (f_unit < f_best) {
      best = 1.0;
      f_best = f_unit;
    }
  }
  // Reject noise-level improvements; at a stationary point the sampled
  // values differ only by rounding and any step would be a random walk.
  if (!(f0 - f_best > 1e-14 * std::max(1.0, std::abs(f0)))) return 0.0;
  return best;
}

FitResult fit(const Eigen::MatrixXd& S, const PenaltyConfig& cfg,
              const SolverSettings& settings,
              const std::optional<PrecisionModel>& init) {
  const int p = static_cast<int>(S.rows());
  if (S.rows() != S.cols()) throw InputError("S must be square");
  PenaltyConfig local = cfg;
  if (local.clustering_weights.dim() == 0) {
    if (local.lambda_c > 0.0)
      throw InputError("clustering penalty requires a weight matrix");
    local.clustering_weights = SymmetricWeights(p);
  }
  if (local.sparsity_weights.dim() == 0)
    local.sparsity_weights = SymmetricWeights::ones(p);

  PrecisionModel start = init ? *init : initial_model(S);
  if (start.assignment.p() != p)
    throw InputError("initial model dimension does not match S");
  if (!is_positive_definite(start.params, start.assignment.sizes))
    throw NumericalError("initial model is not positive definite");

  const double eps_fusion = settings.eps_fusion
                                ? *settings.eps_fusion
                                : default_fusion_threshold(S, settings.tau);
  ModelState state = make_state(S, local, start);
  SweepOptions options;
  options.allow_fusion = true;
  return run_descent(std::move(state), local, settings, eps_fusion, options,
                     start.target);
}

FitResult refit_constrained(const PrecisionModel& model,
                            const Eigen::MatrixXd& S, const PinMask& pins,
                            const SolverSettings& settings) {
  const int p = static_cast<int>(S.rows());
  if (model.assignment.p() != p)
    throw InputError("model dimension does not match S");
  PenaltyConfig cfg;
  cfg.clustering_weights = SymmetricWeights(p);
  cfg.sparsity_weights = SymmetricWeights(p);
  cfg.lambda_c = 0.0;
  cfg.lambda_s = 0.0;

  PrecisionModel start = model;
  const int K = start.params.K();
  if (pins.rows() != K || pins.cols() != K)
    throw InputError("pin mask dimension does not match model");
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      if (pins(k, l)) start.params.R(k, l) = 0.0;

  // Zeroing small entries can nudge the model out of the cone; restore
  // feasibility by inflating the diagonal.
  if (!is_positive_definite(start.params, start.assignment.sizes)) {
    const double scale = 1.0 + start.params.b.cwiseAbs().maxCoeff();
    bool repaired = false;
    for (double ridge = 1e-8; ridge <= 1e2; ridge *= 100.0) {
      BlockParameters candidate = start.params;
      candidate.b.array() += ridge * scale;
      if (is_positive_definite(candidate, start.assignment.sizes)) {
        start.params = candidate;
        repaired = true;
        break;
      }
    }
    if (!repaired)
      throw NumericalError(
          "no positive definite completion of the constrained pattern");
  }

  ModelState state = make_state(S, cfg, start);
  SweepOptions options;
  options.allow_fusion = false;
  options.pins = &pins;
  // The refit contract is accuracy in the parameters, not just the
  // objective, and the unpenalized subproblems are cheap; run the descent to
  // a much tighter tolerance than a penalized fit.
  SolverSettings tight = settings;
  tight.eps_conv = std::min(settings.eps_conv, 1e-11);
  return run_descent(std::move(state), cfg, tight, 0.0, options,
                     model.target);
}

}  // namespace cggm
