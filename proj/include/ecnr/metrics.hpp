#pragma once

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <vector>

#include "ecnr/volume.hpp"

namespace ecnr {

/// 10 log10(peak^2 / MSE). `peak` defaults to the value range of `reference`
/// (1 when the reference is constant). Identical inputs give +infinity.
double psnr(const Volume4D& reference, const Volume4D& test, std::optional<double> peak = std::nullopt);

double mse(const Volume4D& a, const Volume4D& b);

/// Static 3D kd-tree over a point set for nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Eigen::Vector3d> points);
  /// Squared distance to the nearest stored point.
  double nearest_squared(const Eigen::Vector3d& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1, right = -1;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Eigen::Vector3d& q, double& best) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Centers of voxels in timestep t whose (value - isovalue) sign differs from a 6-neighbour.
std::vector<Eigen::Vector3d> surface_voxels(const Volume4D& v, double isovalue, std::int64_t t);

/// Symmetric chamfer distance: mean of the two directed average nearest-neighbour distances
/// between surface-crossing voxel centers, averaged over timesteps that have a surface.
/// Throws when no timestep has surface points in both volumes.
double chamfer(const Volume4D& a, const Volume4D& b, double isovalue);

}  // namespace ecnr
