#include "cggm/simulation.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <map>

#include "cggm/errors.hpp"
#include "cggm/parallel.hpp"

namespace cggm {

namespace {

std::vector<int> cluster_sizes(const DesignSpec& spec, bool unbalanced) {
  if (unbalanced) {
    if (spec.K != 3)
      throw InputError("unbalanced designs are defined for K = 3");
    // 3 : 5 : 7 proportions.
    const int s1 = std::max(1, spec.p * 3 / 15);
    const int s2 = std::max(1, spec.p * 5 / 15);
    return {s1, s2, spec.p - s1 - s2};
  }
  std::vector<int> sizes(spec.K, spec.p / spec.K);
  for (int k = 0; k < spec.p % spec.K; ++k) ++sizes[k];
  return sizes;
}

std::vector<int> labels_from_sizes(const std::vector<int>& sizes) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < sizes.size(); ++k)
    labels.insert(labels.end(), sizes[k], static_cast<int>(k));
  return labels;
}

double within_value(const DesignSpec& spec, Rng& rng) {
  return spec.approx ? 0.4 + 0.2 * rng.uniform() : 0.5;
}

double between_value(const DesignSpec& spec, Rng& rng) {
  return spec.approx ? 0.2 + 0.1 * rng.uniform() : 0.25;
}

void fill_within_blocks(Eigen::MatrixXd& M, const std::vector<int>& labels,
                        const DesignSpec& spec, Rng& rng) {
  const int p = static_cast<int>(labels.size());
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      if (labels[i] != labels[j]) continue;
      const double v = within_value(spec, rng);
      M(i, j) = v;
      M(j, i) = v;
    }
  }
}

void fill_between_pair(Eigen::MatrixXd& M, const std::vector<int>& labels,
                       int k, int l, const DesignSpec& spec, Rng& rng) {
  const int p = static_cast<int>(labels.size());
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      const bool match = (labels[i] == k && labels[j] == l) ||
                         (labels[i] == l && labels[j] == k);
      if (!match) continue;
      const double v = between_value(spec, rng);
      M(i, j) = v;
      M(j, i) = v;
    }
  }
}

}  // namespace

DesignName design_from_string(const std::string& name) {
  static const std::map<std::string, DesignName> table = {
      {"random", DesignName::random},
      {"chain", DesignName::chain},
      {"unbalanced", DesignName::unbalanced},
      {"unstructured", DesignName::unstructured},
      {"diag_balanced", DesignName::diag_balanced},
      {"diag_unbalanced", DesignName::diag_unbalanced},
      {"blockdiag_balanced", DesignName::blockdiag_balanced},
      {"blockdiag_unbalanced", DesignName::blockdiag_unbalanced},
      {"approx_variant", DesignName::approx_variant},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw InputError("unknown design: " + name);
  return it->second;
}

std::string design_to_string(DesignName name) {
  switch (name) {
    case DesignName::random: return "random";
    case DesignName::chain: return "chain";
    case DesignName::unbalanced: return "unbalanced";
    case DesignName::unstructured: return "unstructured";
    case DesignName::diag_balanced: return "diag_balanced";
    case DesignName::diag_unbalanced: return "diag_unbalanced";
    case DesignName::blockdiag_balanced: return "blockdiag_balanced";
    case DesignName::blockdiag_unbalanced: return "blockdiag_unbalanced";
    case DesignName::approx_variant: return "approx_variant";
  }
  throw InputError("unknown design");
}

Eigen::MatrixXd design_matrix(const DesignSpec& spec, Rng& rng,
                              std::vector<int>& labels) {
  const int p = spec.p;
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(p, p);
  switch (spec.name) {
    case DesignName::chain:
    case DesignName::unbalanced:
    case DesignName::approx_variant: {
      DesignSpec local = spec;
      if (spec.name == DesignName::approx_variant) local.approx = true;
      const auto sizes =
          cluster_sizes(local, spec.name == DesignName::unbalanced);
      labels = labels_from_sizes(sizes);
      fill_within_blocks(M, labels, local, rng);
      for (int k = 0; k + 1 < local.K; ++k)
        fill_between_pair(M, labels, k, k + 1, local, rng);
      break;
    }
    case DesignName::random: {
      const auto sizes = cluster_sizes(spec, false);
      labels = labels_from_sizes(sizes);
      // One cluster pair connected, chosen at random.
      std::vector<std::pair<int, int>> pairs;
      for (int k = 0; k < spec.K; ++k)
        for (int l = k + 1; l < spec.K; ++l) pairs.emplace_back(k, l);
      const auto [k, l] = pairs[rng.uniform_int(static_cast<int>(pairs.size()))];
      fill_within_blocks(M, labels, spec, rng);
      fill_between_pair(M, labels, k, l, spec, rng);
      break;
    }
    case DesignName::unstructured: {
      labels.assign(p, 0);
      for (int j = 0; j < p; ++j) labels[j] = j;
      for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
          if (rng.uniform() < spec.edge_prob) {
            const double v = between_value(spec, rng);
            M(i, j) = v;
            M(j, i) = v;
          }
      break;
    }
    case DesignName::diag_balanced:
    case DesignName::diag_unbalanced: {
      const auto sizes = cluster_sizes(
          spec, spec.name == DesignName::diag_unbalanced);
      labels = labels_from_sizes(sizes);
      for (int j = 0; j < p; ++j) M(j, j) = 1.0 + labels[j];
      for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) {
          const double v = within_value(spec, rng);
          M(i, j) = v;
          M(j, i) = v;
        }
      break;
    }
    case DesignName::blockdiag_balanced:
    case DesignName::blockdiag_unbalanced: {
      const auto sizes = cluster_sizes(
          spec, spec.name == DesignName::blockdiag_unbalanced);
      labels = labels_from_sizes(sizes);
      fill_within_blocks(M, labels, spec, rng);
      for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j)
          if (labels[i] != labels[j] && rng.uniform() < spec.edge_prob) {
            const double v = between_value(spec, rng);
            M(i, j) = v;
            M(j, i) = v;
          }
      break;
    }
  }
  return M;
}

SimulatedData generate(const DesignSpec& spec) {
  if (spec.p < 2 || spec.n < 1 || spec.K < 1 || spec.K > spec.p)
    throw InputError("invalid design dimensions");
  Rng rng(spec.seed);
  SimulatedData data;

  Eigen::MatrixXd M;
  bool accepted = false;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<int> labels;
    M = design_matrix(spec, rng, labels);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() == Eigen::Success) {
      data.labels = std::move(labels);
      accepted = true;
      break;
    }
  }
  if (!accepted)
    throw NumericalError(
        "design rejection sampling failed to produce a positive definite "
        "matrix after 1000 attempts");

  data.truth = M;
  const Eigen::MatrixXd sigma =
      spec.target == EstimationTarget::precision
          ? M.llt().solve(Eigen::MatrixXd::Identity(spec.p, spec.p))
          : M;
  const Eigen::MatrixXd L = sigma.llt().matrixL();
  data.X.resize(spec.n, spec.p);
  Eigen::VectorXd z(spec.p);
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < spec.p; ++j) z[j] = rng.normal();
    data.X.row(i) = (L * z).transpose();
  }
  return data;
}

double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw InputError("label vectors must have equal nonzero length");
  const auto ca = ClusterAssignment::from_labels(a);
  const auto cb = ClusterAssignment::from_labels(b);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(ca.K, cb.K);
  for (std::size_t j = 0; j < a.size(); ++j)
    counts(ca.labels[j], cb.labels[j]) += 1.0;

  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_cells = 0.0;
  for (int i = 0; i < ca.K; ++i)
    for (int j = 0; j < cb.K; ++j) sum_cells += choose2(counts(i, j));
  double sum_rows = 0.0, sum_cols = 0.0;
  for (int i = 0; i < ca.K; ++i) sum_rows += choose2(counts.row(i).sum());
  for (int j = 0; j < cb.K; ++j) sum_cols += choose2(counts.col(j).sum());
  const double total = choose2(static_cast<double>(a.size()));
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  const double denom = max_index - expected;
  if (std::abs(denom) < 1e-12)
    return ca.labels == cb.labels ? 1.0 : 0.0;
  return (sum_cells - expected) / denom;
}

EvalReport evaluate(const PrecisionModel& estimate,
                    const Eigen::MatrixXd& truth,
                    const std::vector<int>& true_labels,
                    double zero_threshold) {
  const int p = estimate.assignment.p();
  if (truth.rows() != p || truth.cols() != p ||
      static_cast<int>(true_labels.size()) != p)
    throw InputError("evaluation dimensions do not match");
  EvalReport report;
  const Eigen::MatrixXd theta = materialize(estimate);
  report.frobenius = (theta - truth).norm();
  report.K_hat = estimate.assignment.K;
  report.ari = adjusted_rand_index(estimate.assignment.labels, true_labels);

  int true_zero = 0, true_nonzero = 0, false_positive = 0, false_negative = 0;
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      const bool truth_zero = truth(i, j) == 0.0;
      const bool est_zero = std::abs(theta(i, j)) <= zero_threshold;
      if (truth_zero) {
        ++true_zero;
        if (!est_zero) ++false_positive;
      } else {
        ++true_nonzero;
        if (est_zero) ++false_negative;
      }
    }
  }
  report.fpr = true_zero == 0 ? 0.0
                              : static_cast<double>(false_positive) / true_zero;
  report.fnr = true_nonzero == 0
                   ? 0.0
                   : static_cast<double>(false_negative) / true_nonzero;
  return report;
}

namespace {

PrecisionModel singleton_model(const Eigen::MatrixXd& M) {
  PrecisionModel model;
  model.assignment = ClusterAssignment::singletons(static_cast<int>(M.rows()));
  model.params.b = M.diagonal();
  model.params.R = M;
  model.params.R.diagonal().setZero();
  return model;
}

}  // namespace

std::vector<StudyRow> run_study(const std::vector<DesignSpec>& designs,
                                int replications, const CvPlan& plan,
                                const SolverSettings& settings) {
  const int n_items = static_cast<int>(designs.size()) * replications;
  std::vector<std::vector<StudyRow>> slots(n_items);
  parallel_for(n_items, [&](int item) {
    const DesignSpec& base = designs[item / replications];
    const int rep = item % replications;
    DesignSpec spec = base;
    spec.seed = Rng::derive_seed(base.seed, static_cast<std::uint64_t>(rep));
    const std::string design_name = design_to_string(base.name);

    std::vector<StudyRow>& rows = slots[item];
    auto push = [&](const std::string& method, const EvalReport& report) {
      rows.push_back({design_name, rep, method, report, false, ""});
    };
    try {
      const SimulatedData data = generate(spec);
      CvPlan rep_plan = plan;
      rep_plan.target = base.target;
      rep_plan.seed = Rng::derive_seed(spec.seed, 0x5eed);
      const CvResult cv = select(data.X, rep_plan, settings);

      const Eigen::MatrixXd Xc = column_center(data.X, rep_plan.standardize);
      const Eigen::MatrixXd S = sample_covariance(Xc);
      if (base.target == EstimationTarget::precision) {
        PenaltyConfig eps_cfg;  // default smoothing width for the raw readout
        push("cggm_raw", evaluate(cv.raw_fit.model, data.truth, data.labels,
                                  eps_cfg.epsilon_abs));
        push("cggm_refit",
             evaluate(cv.refit_fit.model, data.truth, data.labels, 0.0));
        push("sinv", evaluate(singleton_model(weight_base_matrix(S)),
                              data.truth, data.labels, 0.0));
      } else {
        // Direct covariance fit, inverted precision fit, sample covariance.
        push("cggm_sigma",
             evaluate(cv.refit_fit.model, data.truth, data.labels, 0.0));
        CvPlan theta_plan = rep_plan;
        theta_plan.target = EstimationTarget::precision;
        theta_plan.phi_grid = {1.0};
        const CvResult cv_theta = select(data.X, theta_plan, settings);
        push("cggm_theta_inv",
             evaluate(block_inverse(cv_theta.refit_fit.model), data.truth,
                      data.labels, 0.0));
        push("sample_cov",
             evaluate(singleton_model(S), data.truth, data.labels, 0.0));
      }
    } catch (const std::exception& e) {
      rows.push_back({design_name, rep, "error", EvalReport{}, true, e.what()});
    }
  });

  std::vector<StudyRow> result;
  for (auto& slot : slots)
    for (auto& row : slot) result.push_back(std::move(row));
  return result;
}

}  // namespace cggm
