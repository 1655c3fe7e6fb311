#include "ecnr/assign.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace ecnr {

std::vector<int> Clustering::sizes() const {
  std::vector<int> s(static_cast<std::size_t>(k()), 0);
  for (int l : labels) ++s[static_cast<std::size_t>(l)];
  return s;
}

std::vector<std::vector<int>> Clustering::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(k()));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  return out;
}

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids) {
  Eigen::MatrixXd d = -2.0 * points * centroids.transpose();
  d.colwise() += points.rowwise().squaredNorm();
  d.rowwise() += centroids.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

namespace {

void check_inputs(const Eigen::MatrixXd& points, int k) {
  if (points.rows() == 0) throw Error("k-means on empty input");
  if (k <= 0) throw Error("k-means needs at least one cluster");
  if (k > points.rows())
    throw Error("k-means with k=" + std::to_string(k) + " exceeds point count " + std::to_string(points.rows()));
}

int argmin_row(const Eigen::MatrixXd& d, Eigen::Index row) {
  Eigen::Index best = 0;
  d.row(row).minCoeff(&best);
  return static_cast<int>(best);
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd nearest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= nearest[i];
        if (r < 0.0 && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (nearest[pick] <= 0.0 && pick > 0) --pick;
    }
    centroids.row(c) = points.row(pick);
    nearest = nearest.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

}  // namespace

Clustering kmeans(const Eigen::MatrixXd& points, int k, int max_iters, std::uint64_t seed) {
  check_inputs(points, k);
  Rng rng(seed);
  const Eigen::Index n = points.rows();
  Clustering result;
  result.centroids = seed_plus_plus(points, k, rng);
  result.labels.assign(static_cast<std::size_t>(n), -1);

  for (int iter = 0; iter < std::max(1, max_iters); ++iter) {
    const Eigen::MatrixXd d = squared_distances(points, result.centroids);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = argmin_row(d, i);
    if (labels == result.labels) break;
    result.labels = std::move(labels);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = result.labels[static_cast<std::size_t>(i)];
      sums.row(l) += points.row(i);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) result.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];

    // Empty-cluster repair: move the centroid onto the worst-fit point.
    Eigen::VectorXd own(n);
    for (Eigen::Index i = 0; i < n; ++i)
      own[i] = (points.row(i) - result.centroids.row(result.labels[static_cast<std::size_t>(i)])).squaredNorm();
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = 0;
      const double worst = own.maxCoeff(&far);
      if (worst <= 0.0) continue;
      result.centroids.row(c) = points.row(far);
      own[far] = 0.0;
    }
  }
  return result;
}

Clustering kmeans_uniform(const Eigen::MatrixXd& points, int k, std::uint64_t seed, UniformTrace* trace,
                          int max_iters) {
  Clustering base = kmeans(points, k, max_iters, seed);
  const auto n = static_cast<int>(points.rows());
  const Eigen::MatrixXd d = squared_distances(points, base.centroids);
  std::vector<double> gain(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) gain[static_cast<std::size_t>(i)] = d.row(i).maxCoeff() - d.row(i).minCoeff();

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return gain[static_cast<std::size_t>(a)] > gain[static_cast<std::size_t>(b)]; });

  const int lower = n / k;
  const int upper = (n + k - 1) / k;
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  Clustering out;
  out.centroids = base.centroids;
  out.labels.assign(static_cast<std::size_t>(n), -1);

  auto nearest_below = [&](int i, int cap) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] >= cap) continue;
      if (d(i, c) < best_d) {
        best_d = d(i, c);
        best = c;
      }
    }
    return best;
  };

  for (int i : order) {
    int c = nearest_below(i, lower);
    if (c < 0) c = nearest_below(i, upper);
    out.labels[static_cast<std::size_t>(i)] = c;
    ++sizes[static_cast<std::size_t>(c)];
  }
  if (trace) {
    trace->order = order;
    trace->gain.clear();
    for (int i : order) trace->gain.push_back(gain[static_cast<std::size_t>(i)]);
  }
  return out;
}

int Assignment::max_cluster_size() const {
  std::size_t best = 0;
  for (const auto& mem : members) best = std::max(best, mem.size());
  return static_cast<int>(best);
}

Assignment make_assignment(int scale, int m, std::vector<std::int64_t> block_ids, std::vector<int> cluster_of) {
  if (block_ids.size() != cluster_of.size()) throw FormatError("assignment length does not match block count");
  Assignment a;
  a.scale = scale;
  a.m = m;
  a.block_ids = std::move(block_ids);
  a.cluster_of = std::move(cluster_of);
  a.members.assign(static_cast<std::size_t>(m), {});
  a.slot_of.assign(a.cluster_of.size(), 0);
  for (std::size_t b = 0; b < a.cluster_of.size(); ++b) {
    const int c = a.cluster_of[b];
    if (c < 0 || c >= m) throw FormatError("assignment refers to MLP " + std::to_string(c) + " of " + std::to_string(m));
    a.slot_of[b] = static_cast<int>(a.members[static_cast<std::size_t>(c)].size());
    a.members[static_cast<std::size_t>(c)].push_back(static_cast<int>(b));
  }
  return a;
}

Assignment assign_blocks(const BlockGrid& grid, const Volume4D& target, int blocks_per_mlp, std::uint64_t seed,
                         int max_iters) {
  if (blocks_per_mlp <= 0) throw ConfigError("blocks per MLP must be positive");
  auto ids = grid.effective_ids();
  const auto n = static_cast<int>(ids.size());
  if (n == 0) return make_assignment(grid.scale, 0, {}, {});
  const int m = (n + blocks_per_mlp - 1) / blocks_per_mlp;

  Eigen::MatrixXd features(n, grid.block[0] * grid.block[1] * grid.block[2]);
  for (int i = 0; i < n; ++i)
    features.row(i) = extract_block(target, grid.specs[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])], grid.block)
                          .cast<double>()
                          .transpose();
  const Clustering c = kmeans_uniform(features, m, seed, nullptr, max_iters);
  return make_assignment(grid.scale, m, std::move(ids), c.labels);
}

}  // namespace ecnr
