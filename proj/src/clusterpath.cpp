#include "cggm/clusterpath.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "cggm/errors.hpp"

namespace cggm {

namespace {

double relative_change(const Eigen::MatrixXd& previous,
                       const Eigen::MatrixXd& current) {
  const double base = previous.norm();
  if (base == 0.0) return current.norm() == 0.0 ? 0.0 : 1.0;
  return (previous - current).norm() / base;
}

struct ChainPoint {
  double lambda;
  FitResult fit;
  Eigen::MatrixXd theta;
};

}  // namespace

double path_kappa(int p, const SymmetricWeights& W) {
  const double weight_sum = W.sum();
  if (weight_sum <= 0.0)
    throw InputError("clusterpath rescaling requires positive weights");
  return 1.0 / (std::sqrt(static_cast<double>(p - 1)) * weight_sum);
}

ClusterpathSolution compute_path(const Eigen::MatrixXd& S,
                                 const PenaltyConfig& base_cfg,
                                 const SolverSettings& settings,
                                 const PathSettings& path_settings) {
  const int p = static_cast<int>(S.rows());
  if (base_cfg.clustering_weights.dim() != p)
    throw InputError("clustering weights do not match data dimension");

  ClusterpathSolution solution;
  solution.kappa = path_kappa(p, base_cfg.clustering_weights);
  const double scale = p * solution.kappa;
  const int min_clusters = base_cfg.clustering_weights.component_count();

  const PrecisionModel start = initial_model(S);
  const double eps_fusion =
      settings.eps_fusion ? *settings.eps_fusion
                          : default_fusion_threshold(S, settings.tau);
  SolverSettings fit_settings = settings;
  fit_settings.eps_fusion = eps_fusion;
  if (path_settings.tight_convergence)
    fit_settings.eps_conv = std::min(settings.eps_conv, 1e-10);

  auto fit_at = [&](double lambda, const PrecisionModel& warm) {
    PenaltyConfig cfg = base_cfg;
    cfg.lambda_c = scale * lambda;
    return fit(S, cfg, fit_settings, warm);
  };

  // Every point is warm-started from its immediate predecessor in the final
  // sequence, so partitions are nested and K is non-increasing by
  // construction. Refinement bisects an interval in place before the chain
  // moves on.
  std::vector<ChainPoint> chain;
  auto push_fit = [&](double lambda, FitResult result) {
    Eigen::MatrixXd theta = materialize(result.model);
    chain.push_back({lambda, std::move(result), std::move(theta)});
  };

  const std::function<void(double, int)> advance = [&](double target,
                                                       int depth) {
    FitResult result = fit_at(target, chain.back().fit.model);
    const Eigen::MatrixXd theta = materialize(result.model);
    const double lo = chain.back().lambda;
    const double mid = 0.5 * (lo + target);
    if (depth >= path_settings.max_refine_depth || mid <= lo ||
        mid >= target ||
        relative_change(chain.back().theta, theta) <=
            path_settings.refine_threshold) {
      push_fit(target, std::move(result));
      return;
    }
    advance(mid, depth + 1);
    advance(target, depth + 1);
  };

  double lambda = path_settings.lambda_init;
  push_fit(lambda, fit_at(lambda, start));
  for (int step = 0; step < path_settings.max_rough_steps &&
                     chain.back().fit.model.assignment.K > min_clusters;
       ++step) {
    lambda *= path_settings.growth;
    advance(lambda, 0);
  }

  solution.points.reserve(chain.size());
  for (auto& point : chain) {
    PathPoint out;
    out.lambda_c = point.lambda;
    out.gamma_c = scale * point.lambda;
    out.K = point.fit.model.assignment.K;
    out.fit = std::move(point.fit);
    solution.points.push_back(std::move(out));
  }

  // Merge hierarchy: compare consecutive partitions, starting from
  // singletons; simultaneous merges are recorded as binary merges in member
  // order.
  ClusterAssignment current = ClusterAssignment::singletons(p);
  for (const auto& point : solution.points) {
    const ClusterAssignment& next = point.fit.model.assignment;
    auto groups = current.members();
    std::map<int, std::vector<int>> images;  // next-cluster -> current clusters
    for (int k = 0; k < current.K; ++k)
      images[next.labels[groups[k].front()]].push_back(k);
    for (const auto& [target, sources] : images) {
      if (sources.size() < 2) continue;
      std::vector<int> accumulated = groups[sources[0]];
      for (std::size_t s = 1; s < sources.size(); ++s) {
        PathMerge merge;
        merge.lambda_c = point.lambda_c;
        merge.members_a = accumulated;
        merge.members_b = groups[sources[s]];
        accumulated.insert(accumulated.end(), merge.members_b.begin(),
                           merge.members_b.end());
        std::sort(accumulated.begin(), accumulated.end());
        solution.merges.push_back(std::move(merge));
      }
    }
    current = next;
  }
  return solution;
}

FitResult fit_at_path_position(const Eigen::MatrixXd& S,
                               const PenaltyConfig& base_cfg, double lambda_c,
                               const SolverSettings& settings,
                               const PathSettings& path_settings) {
  const int p = static_cast<int>(S.rows());
  const double scale = p * path_kappa(p, base_cfg.clustering_weights);
  const double eps_fusion =
      settings.eps_fusion ? *settings.eps_fusion
                          : default_fusion_threshold(S, settings.tau);
  SolverSettings fit_settings = settings;
  fit_settings.eps_fusion = eps_fusion;

  PrecisionModel warm = initial_model(S);
  for (double lambda = path_settings.lambda_init; lambda < lambda_c;
       lambda *= path_settings.growth) {
    PenaltyConfig cfg = base_cfg;
    cfg.lambda_c = scale * lambda;
    warm = fit(S, cfg, fit_settings, warm).model;
    if (warm.assignment.K == 1) break;
  }
  PenaltyConfig cfg = base_cfg;
  cfg.lambda_c = scale * lambda_c;
  return fit(S, cfg, fit_settings, warm);
}

Dendrogram dendrogram(const ClusterpathSolution& path,
                      const std::vector<std::string>& names) {
  Dendrogram tree;
  if (path.points.empty()) throw InputError("empty clusterpath");
  tree.p = path.points.front().fit.model.assignment.p();
  tree.leaf_names.resize(tree.p);
  for (int j = 0; j < tree.p; ++j)
    tree.leaf_names[j] = j < static_cast<int>(names.size())
                             ? names[j]
                             : "V" + std::to_string(j + 1);

  // node id holding each variable's current subtree
  std::vector<int> holder(tree.p);
  for (int j = 0; j < tree.p; ++j) holder[j] = j;
  int next_id = tree.p;
  for (const auto& merge : path.merges) {
    DendrogramNode node;
    node.id = next_id++;
    node.child_a = holder[merge.members_a.front()];
    node.child_b = holder[merge.members_b.front()];
    node.height = merge.lambda_c;
    node.members = merge.members_a;
    node.members.insert(node.members.end(), merge.members_b.begin(),
                        merge.members_b.end());
    std::sort(node.members.begin(), node.members.end());
    for (int j : node.members) holder[j] = node.id;
    tree.nodes.push_back(std::move(node));
  }
  return tree;
}

std::string to_newick(const Dendrogram& tree) {
  // Heights of all nodes, for branch lengths.
  std::vector<double> height(tree.p + tree.nodes.size(), 0.0);
  for (const auto& node : tree.nodes) height[node.id] = node.height;

  std::vector<std::string> rendered(tree.p + tree.nodes.size());
  for (int j = 0; j < tree.p; ++j) rendered[j] = tree.leaf_names[j];
  std::vector<bool> is_root(tree.p + tree.nodes.size(), true);
  char buf[64];
  for (const auto& node : tree.nodes) {
    std::string text = "(";
    for (const int child : {node.child_a, node.child_b}) {
      std::snprintf(buf, sizeof(buf), ":%.17g",
                    std::max(node.height - height[child], 0.0));
      text += rendered[child];
      text += buf;
      text += child == node.child_a ? "," : ")";
      is_root[child] = false;
    }
    rendered[node.id] = std::move(text);
  }
  std::string out;
  for (std::size_t id = 0; id < rendered.size(); ++id) {
    if (!is_root[id]) continue;
    if (!out.empty()) out += "\n";
    out += rendered[id] + ";";
  }
  return out;
}

PinMask zero_pattern(const BlockParameters& params, double threshold) {
  const int K = params.K();
  PinMask pins(K, K);
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      pins(k, l) = std::abs(params.R(k, l)) < threshold;
  return pins;
}

FitResult refit(const PrecisionModel& model, const Eigen::MatrixXd& S,
                const SolverSettings& settings, double zero_threshold) {
  return refit_constrained(model, S, zero_pattern(model.params, zero_threshold),
                           settings);
}

}  // namespace cggm
