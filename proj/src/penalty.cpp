#include "cggm/penalty.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cggm/errors.hpp"

namespace cggm {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

}  // namespace

void SymmetricWeights::set(int i, int j, double w) {
  if (i == j) throw InputError("diagonal weight entries are not allowed");
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= dim_) throw InputError("weight index out of range");
  auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair(i, j),
                             [](const Entry& e, const std::pair<int, int>& p) {
                               return std::pair(e.i, e.j) < p;
                             });
  if (it != entries_.end() && it->i == i && it->j == j)
    it->w = w;
  else
    entries_.insert(it, Entry{i, j, w});
}

double SymmetricWeights::sum() const {
  double total = 0.0;
  for (const auto& e : entries_) total += e.w;
  return total;
}

int SymmetricWeights::component_count() const {
  UnionFind uf(dim_);
  int components = dim_;
  for (const auto& e : entries_)
    if (e.w != 0.0 && uf.unite(e.i, e.j)) --components;
  return components;
}

Eigen::MatrixXd SymmetricWeights::dense() const {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim_, dim_);
  for (const auto& e : entries_) {
    M(e.i, e.j) = e.w;
    M(e.j, e.i) = e.w;
  }
  return M;
}

SymmetricWeights SymmetricWeights::ones(int dim) {
  SymmetricWeights W(dim);
  W.entries_.reserve(dim * (dim - 1) / 2);
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) W.entries_.push_back(Entry{i, j, 1.0});
  return W;
}

SymmetricWeights SymmetricWeights::from_dense(const Eigen::MatrixXd& M,
                                              double tolerance) {
  if (M.rows() != M.cols()) throw InputError("weight matrix must be square");
  SymmetricWeights W(static_cast<int>(M.rows()));
  for (int i = 0; i < M.rows(); ++i)
    for (int j = i + 1; j < M.cols(); ++j)
      if (std::abs(M(i, j)) > tolerance)
        W.entries_.push_back(Entry{i, j, M(i, j)});
  return W;
}

Eigen::MatrixXd SymmetricWeights::aggregate(const ClusterAssignment& asg) const {
  if (asg.p() != dim_)
    throw InputError("assignment dimension does not match weight matrix");
  Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(asg.K, asg.K);
  for (const auto& e : entries_) {
    const int k = asg.labels[e.i];
    const int l = asg.labels[e.j];
    agg(k, l) += e.w;
    if (k != l) agg(l, k) += e.w;
    // Within-cluster pairs count twice: both ordered orientations.
    else
      agg(k, l) += e.w;
  }
  return agg;
}

std::string SymmetricWeights::to_csv() const {
  std::ostringstream out;
  out << "i,j,value\n";
  char buf[64];
  for (const auto& e : entries_) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", e.i, e.j, e.w);
    out << buf;
  }
  return out.str();
}

SymmetricWeights SymmetricWeights::from_csv(const std::string& text, int dim) {
  SymmetricWeights W(dim);
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && line.find("i,") == 0) {
      first = false;
      continue;
    }
    first = false;
    std::istringstream fields(line);
    std::string a, b, c;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') ||
        !std::getline(fields, c))
      throw InputError("malformed weight triplet line: " + line);
    W.set(std::stoi(a), std::stoi(b), std::stod(c));
  }
  return W;
}

double pairwise_distance(const Eigen::MatrixXd& M, int j, int j_prime) {
  if (j == j_prime)
    throw InputError("pairwise_distance requires two distinct indices");
  const int p = static_cast<int>(M.rows());
  double sq = (M(j, j) - M(j_prime, j_prime)) * (M(j, j) - M(j_prime, j_prime));
  for (int m = 0; m < p; ++m) {
    if (m == j || m == j_prime) continue;
    const double diff = M(j, m) - M(j_prime, m);
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

Eigen::MatrixXd pairwise_squared_distances(const Eigen::MatrixXd& M) {
  const int p = static_cast<int>(M.rows());
  Eigen::MatrixXd D2 = Eigen::MatrixXd::Zero(p, p);
  for (int j = 0; j < p; ++j) {
    for (int i = j + 1; i < p; ++i) {
      double sq = (M(j, j) - M(i, i)) * (M(j, j) - M(i, i));
      for (int m = 0; m < p; ++m) {
        if (m == j || m == i) continue;
        const double diff = M(j, m) - M(i, m);
        sq += diff * diff;
      }
      D2(j, i) = sq;
      D2(i, j) = sq;
    }
  }
  return D2;
}

Eigen::MatrixXd weight_base_matrix(const Eigen::MatrixXd& S) {
  const int p = static_cast<int>(S.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() == Eigen::Success)
    return llt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::LLT<Eigen::MatrixXd> reg(S + Eigen::MatrixXd::Identity(p, p));
  if (reg.info() != Eigen::Success)
    throw NumericalError("S + I is not positive definite");
  return reg.solve(Eigen::MatrixXd::Identity(p, p));
}

SymmetricWeights build_weights_from_inverse(const Eigen::MatrixXd& M, int knn,
                                            double phi) {
  const int p = static_cast<int>(M.rows());
  if (p < 2) throw InputError("need at least two variables to build weights");
  if (knn < 1) throw InputError("knn must be positive");
  const Eigen::MatrixXd D2 = pairwise_squared_distances(M);
  if (!D2.allFinite())
    throw NumericalError("degenerate input: non-finite pairwise distance");

  // k nearest neighbors per variable, ties broken by smaller index.
  std::vector<std::vector<bool>> edge(p, std::vector<bool>(p, false));
  const int k_eff = std::min(knn, p - 1);
  for (int j = 0; j < p; ++j) {
    std::vector<int> order;
    order.reserve(p - 1);
    for (int i = 0; i < p; ++i)
      if (i != j) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (D2(j, a) != D2(j, b)) return D2(j, a) < D2(j, b);
      return a < b;
    });
    for (int r = 0; r < k_eff; ++r) {
      edge[j][order[r]] = true;
      edge[order[r]][j] = true;
    }
  }

  // Minimum spanning tree over the full distance graph (Kruskal, lexicographic
  // tie-break); its edges are added to the neighbor graph so that a single
  // connected component remains.
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(p * (p - 1) / 2);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j) pairs.emplace_back(i, j);
  std::stable_sort(pairs.begin(), pairs.end(),
                   [&](const auto& a, const auto& b) {
                     const double da = D2(a.first, a.second);
                     const double db = D2(b.first, b.second);
                     if (da != db) return da < db;
                     return a < b;
                   });
  UnionFind uf(p);
  for (const auto& [i, j] : pairs) {
    if (uf.unite(i, j)) {
      edge[i][j] = true;
      edge[j][i] = true;
    }
  }

  double mean_sq = 0.0;
  int edge_count = 0;
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      if (edge[i][j]) {
        mean_sq += D2(i, j);
        ++edge_count;
      }
  mean_sq /= edge_count;

  SymmetricWeights W(p);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      if (edge[i][j]) {
        const double w =
            mean_sq > 0.0 ? std::exp(-phi * D2(i, j) / mean_sq) : 1.0;
        W.set(i, j, w);
      }
  return W;
}

SymmetricWeights build_weights(const Eigen::MatrixXd& S, int knn, double phi) {
  return build_weights_from_inverse(weight_base_matrix(S), knn, phi);
}

double cluster_distance(int k, int l, const BlockParameters& params,
                        const std::vector<int>& sizes) {
  if (k == l)
    throw InputError("cluster_distance requires two distinct clusters");
  const int K = params.K();
  const double db = params.b[k] - params.b[l];
  double sq = db * db;
  double diff = params.R(k, k) - params.R(k, l);
  sq += (sizes[k] - 1) * diff * diff;
  diff = params.R(l, l) - params.R(k, l);
  sq += (sizes[l] - 1) * diff * diff;
  for (int m = 0; m < K; ++m) {
    if (m == k || m == l) continue;
    diff = params.R(k, m) - params.R(l, m);
    sq += sizes[m] * diff * diff;
  }
  return std::sqrt(sq);
}

double aggregate_weight(int k, int l, const SymmetricWeights& W,
                        const ClusterAssignment& asg) {
  if (k == l) throw InputError("aggregate_weight requires distinct clusters");
  double total = 0.0;
  for (const auto& e : W.entries()) {
    const int a = asg.labels[e.i];
    const int b = asg.labels[e.j];
    if ((a == k && b == l) || (a == l && b == k)) total += e.w;
  }
  return total;
}

SmoothedAbs smoothed_abs(double x, double eps) {
  if (std::abs(x) < eps)
    return {(x * x + eps * eps) / (2.0 * eps), x / eps, 1.0 / eps};
  return {std::abs(x), x > 0.0 ? 1.0 : -1.0, 0.0};
}

}  // namespace cggm
