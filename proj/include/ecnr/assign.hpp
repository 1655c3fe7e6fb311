#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "ecnr/pyramid.hpp"

namespace ecnr {

/// Clustering of the rows of a point matrix.
struct Clustering {
  std::vector<int> labels;    ///< cluster id per point
  Eigen::MatrixXd centroids;  ///< k x dim

  int k() const { return static_cast<int>(centroids.rows()); }
  std::vector<int> sizes() const;
  /// Member point indices per cluster, ascending.
  std::vector<std::vector<int>> members() const;
};

/// Lloyd's algorithm with k-means++ seeding over the rows of `points`.
/// Converges when assignments stop changing. An empty cluster is re-seeded from the
/// point farthest from its centroid; if every point sits on its centroid it stays empty.
Clustering kmeans(const Eigen::MatrixXd& points, int k, int max_iters, std::uint64_t seed);

/// Visiting order of the size-uniformization pass.
struct UniformTrace {
  std::vector<int> order;     ///< point indices in reassignment order
  std::vector<double> gain;   ///< max - min squared centroid distance, in that order
};

/// Rebalances a k-means result so every cluster has floor(n/k) or ceil(n/k) points.
/// Points are visited by decreasing gap between their farthest and nearest centroid and
/// placed in the nearest cluster still below floor(n/k), else below ceil(n/k).
/// Centroids are returned as computed by the initial k-means, without a refit.
Clustering kmeans_uniform(const Eigen::MatrixXd& points, int k, std::uint64_t seed, UniformTrace* trace = nullptr,
                          int max_iters = 50);

/// Squared Euclidean distances, n x k.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids);

/// Mapping of the effective blocks of one scale onto MLPs.
struct Assignment {
  int scale = 1;
  int m = 0;
  std::vector<std::int64_t> block_ids;        ///< effective linear block ids, ascending
  std::vector<int> cluster_of;                ///< MLP id per effective block
  std::vector<int> slot_of;                   ///< position within its MLP's block list
  std::vector<std::vector<int>> members;      ///< per MLP: effective-block indices ascending

  int block_count() const { return static_cast<int>(block_ids.size()); }
  int max_cluster_size() const;
};

/// Builds slots and member lists from a per-block MLP id array.
Assignment make_assignment(int scale, int m, std::vector<std::int64_t> block_ids, std::vector<int> cluster_of);

/// Clusters the effective blocks into m = ceil(n / blocks_per_mlp) near-equal groups.
/// Features are the raw voxel values of each block.
Assignment assign_blocks(const BlockGrid& grid, const Volume4D& target, int blocks_per_mlp, std::uint64_t seed,
                         int max_iters = 50);

}  // namespace ecnr
