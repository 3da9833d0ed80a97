#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "cggm/clusterpath.hpp"
#include "cggm/errors.hpp"
#include "cggm/simulation.hpp"
#include "support.hpp"

using namespace cggm;
using namespace testsupport;

namespace {

Eigen::MatrixXd chain_sample_covariance(std::uint64_t seed, int n = 120) {
  DesignSpec spec;
  spec.name = DesignName::chain;
  spec.seed = seed;
  spec.n = n;
  const SimulatedData data = generate(spec);
  const Eigen::MatrixXd Xc = data.X.rowwise() - data.X.colwise().mean();
  return Xc.transpose() * Xc / static_cast<double>(n);
}

PenaltyConfig path_config(const Eigen::MatrixXd& S, double lambda_s = 0.0) {
  PenaltyConfig cfg;
  cfg.clustering_weights = build_weights(S, 5, 1.0);
  cfg.sparsity_weights = SymmetricWeights::ones(static_cast<int>(S.rows()));
  cfg.lambda_s = lambda_s;
  return cfg;
}

bool is_coarsening_of(const ClusterAssignment& fine,
                      const ClusterAssignment& coarse) {
  std::vector<int> image(fine.K, -1);
  for (int j = 0; j < fine.p(); ++j) {
    if (image[fine.labels[j]] < 0)
      image[fine.labels[j]] = coarse.labels[j];
    else if (image[fine.labels[j]] != coarse.labels[j])
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("path on connected weights terminates at one cluster") {
  const Eigen::MatrixXd S = chain_sample_covariance(3);
  const ClusterpathSolution path = compute_path(S, path_config(S));
  REQUIRE(!path.points.empty());
  CHECK(path.points.back().K == 1);

  // Lambdas strictly increasing, K non-increasing, partitions nested.
  for (std::size_t q = 1; q < path.points.size(); ++q) {
    CHECK(path.points[q].lambda_c > path.points[q - 1].lambda_c);
    CHECK(path.points[q].K <= path.points[q - 1].K);
    CHECK(is_coarsening_of(path.points[q - 1].fit.model.assignment,
                           path.points[q].fit.model.assignment));
  }

  // Adjacent solutions satisfy the refinement criterion.
  for (std::size_t q = 1; q < path.points.size(); ++q) {
    const Eigen::MatrixXd prev = materialize(path.points[q - 1].fit.model);
    const Eigen::MatrixXd cur = materialize(path.points[q].fit.model);
    CHECK((prev - cur).norm() / prev.norm() <= 0.01 + 1e-12);
  }

  // The rescaled multiplier is consistent with kappa.
  const int p = static_cast<int>(S.rows());
  for (const auto& point : path.points)
    CHECK(point.gamma_c ==
          doctest::Approx(p * path.kappa * point.lambda_c).epsilon(1e-12));
}

TEST_CASE("path recovers the chain partition at some point") {
  int hits = 0;
  const int reps = 8;
  for (int rep = 0; rep < reps; ++rep) {
    const Eigen::MatrixXd S = chain_sample_covariance(100 + rep);
    const ClusterpathSolution path = compute_path(S, path_config(S));
    for (const auto& point : path.points) {
      if (point.K != 3) continue;
      const std::vector<int> expected = {0, 0, 0, 0, 0, 1, 1, 1,
                                         1, 1, 2, 2, 2, 2, 2};
      if (point.fit.model.assignment.labels == expected) {
        ++hits;
        break;
      }
    }
  }
  CHECK(hits >= 6);
}

TEST_CASE("kappa rescaling keeps the penalty invariant under weight scaling") {
  const Eigen::MatrixXd S = chain_sample_covariance(7);
  const int p = static_cast<int>(S.rows());
  PenaltyConfig cfg = path_config(S);
  const double kappa = path_kappa(p, cfg.clustering_weights);

  SymmetricWeights doubled(p);
  for (const auto& e : cfg.clustering_weights.entries())
    doubled.set(e.i, e.j, 2.0 * e.w);
  const double kappa2 = path_kappa(p, doubled);
  CHECK(kappa2 == doctest::Approx(kappa / 2.0).epsilon(1e-13));

  // Same lambda position => identical aggregation term: gamma * sum(w d).
  const double lambda = 0.8;
  const double term1 = (p * kappa * lambda) * cfg.clustering_weights.sum();
  const double term2 = (p * kappa2 * lambda) * doubled.sum();
  CHECK(term1 == doctest::Approx(term2).epsilon(1e-13));
}

TEST_CASE("warm start at a solved point is a fixed point") {
  const Eigen::MatrixXd S = chain_sample_covariance(11);
  PenaltyConfig cfg = path_config(S);
  // Converged tightly enough that a re-solve cannot move the objective.
  SolverSettings settings;
  settings.eps_conv = 1e-10;
  const ClusterpathSolution path = compute_path(S, cfg, settings);
  const PathPoint& mid = path.points[path.points.size() / 2];

  PenaltyConfig refit_cfg = cfg;
  refit_cfg.lambda_c = mid.gamma_c;
  const FitResult again = fit(S, refit_cfg, settings, mid.fit.model);
  CHECK(std::abs(again.objective_trace.back() -
                 mid.fit.objective_trace.back()) <= 1e-9 *
            std::max(1.0, std::abs(mid.fit.objective_trace.back())));
}

TEST_CASE("dendrogram: two variables merge at the recorded height") {
  Rng rng(13);
  Eigen::MatrixXd S(2, 2);
  S << 1.0, 0.4, 0.4, 1.0;
  PenaltyConfig cfg;
  cfg.clustering_weights = SymmetricWeights(2);
  cfg.clustering_weights.set(0, 1, 1.0);
  cfg.sparsity_weights = SymmetricWeights::ones(2);
  const ClusterpathSolution path = compute_path(S, cfg);
  CHECK(path.points.back().K == 1);
  REQUIRE(path.merges.size() == 1);
  const Dendrogram tree = dendrogram(path, {"a", "b"});
  REQUIRE(tree.nodes.size() == 1);
  CHECK(tree.nodes[0].height == path.merges[0].lambda_c);
  CHECK(tree.nodes[0].members == std::vector<int>({0, 1}));
  const std::string newick = to_newick(tree);
  CHECK(newick.find("a:") != std::string::npos);
  CHECK(newick.find("b:") != std::string::npos);
  CHECK(newick.back() == ';');
}

TEST_CASE("dendrogram heights are monotone and leaves partition variables") {
  const Eigen::MatrixXd S = chain_sample_covariance(17);
  const ClusterpathSolution path = compute_path(S, path_config(S));
  const Dendrogram tree = dendrogram(path);
  REQUIRE(static_cast<int>(tree.nodes.size()) == tree.p - 1);

  std::vector<double> height(tree.p + tree.nodes.size(), 0.0);
  std::vector<int> coverage(tree.p, 0);
  for (const auto& node : tree.nodes) {
    height[node.id] = node.height;
    CHECK(node.height >= height[node.child_a]);
    CHECK(node.height >= height[node.child_b]);
  }
  for (int j : tree.nodes.back().members) ++coverage[j];
  // The final merge holds every variable exactly once.
  CHECK(tree.nodes.back().members.size() == static_cast<std::size_t>(tree.p));
  for (int j = 0; j < tree.p; ++j) CHECK(coverage[j] == 1);
}

TEST_CASE("chain subtrees form before cross-cluster merges") {
  int hits = 0;
  const int reps = 8;
  for (int rep = 0; rep < reps; ++rep) {
    const Eigen::MatrixXd S = chain_sample_covariance(300 + rep);
    const ClusterpathSolution path = compute_path(S, path_config(S));
    const Dendrogram tree = dendrogram(path);
    // Look for each true group as the member set of some node.
    int found = 0;
    for (int g = 0; g < 3; ++g) {
      const std::vector<int> group = {5 * g, 5 * g + 1, 5 * g + 2, 5 * g + 3,
                                      5 * g + 4};
      for (const auto& node : tree.nodes)
        if (node.members == group) {
          ++found;
          break;
        }
    }
    if (found == 3) ++hits;
  }
  CHECK(hits >= 6);
}

TEST_CASE("refit: unconstrained case returns the inverse covariance") {
  Rng rng(19);
  const int p = 10;
  const Eigen::MatrixXd X = random_gaussian_data(80, p, rng);
  const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd S = Xc.transpose() * Xc / 80.0;
  const Eigen::MatrixXd target =
      S.llt().solve(Eigen::MatrixXd::Identity(p, p));

  // Dense singleton model without zeros: refit is plain maximum likelihood.
  PrecisionModel start = initial_model(S);
  start.params.b.array() *= 1.1;
  const FitResult result = refit(start, S, SolverSettings{}, 0.0);
  CHECK((materialize(result.model) - target).norm() <= 1e-6);

  // A refit from the exact optimum does not move.
  const FitResult fixed = refit(initial_model(S), S, SolverSettings{}, 0.0);
  CHECK((materialize(fixed.model) - target).norm() <= 1e-8);
}

TEST_CASE("refit pins the sparsity pattern read at the threshold") {
  const Eigen::MatrixXd S = chain_sample_covariance(23);
  PenaltyConfig cfg = path_config(S, /*lambda_s=*/0.05);
  cfg.lambda_c = 0.2;
  const FitResult raw = fit(S, cfg);
  const PinMask pins = zero_pattern(raw.model.params, cfg.epsilon_abs);
  const FitResult refitted = refit(raw.model, S, SolverSettings{},
                                   cfg.epsilon_abs);
  const int K = refitted.model.params.K();
  REQUIRE(K == raw.model.params.K());
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l)
      if (pins(k, l) && !(k == l && refitted.model.assignment.sizes[k] == 1))
        CHECK(refitted.model.params.R(k, l) == 0.0);
  CHECK(refitted.model.assignment == raw.model.assignment);
}

TEST_CASE("empty path input is rejected") {
  ClusterpathSolution empty;
  CHECK_THROWS_AS(dendrogram(empty), InputError);
}
