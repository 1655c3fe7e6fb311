#include "ecnr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecnr {

double mse(const Volume4D& a, const Volume4D& b) {
  detail::require_same_dims(a.dims(), b.dims());
  return (a.values().cast<double>() - b.values().cast<double>()).squaredNorm() / static_cast<double>(a.size());
}

double psnr(const Volume4D& reference, const Volume4D& test, std::optional<double> peak) {
  const double err = mse(reference, test);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  double p = peak.value_or(static_cast<double>(reference.values().maxCoeff()) - reference.values().minCoeff());
  if (!(p > 0.0)) p = 1.0;
  return 10.0 * std::log10(p * p / err);
}

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree::build(std::vector<int>& idx, int lo, int hi, int depth) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[static_cast<std::size_t>(mid)], axis, -1, -1});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(int node, const Eigen::Vector3d& q, double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  const Eigen::Vector3d& p = points_[static_cast<std::size_t>(n.point)];
  best = std::min(best, (p - q).squaredNorm());
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0 ? n.left : n.right;
  const int far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  if (diff * diff < best) search(far, q, best);
}

double KdTree::nearest_squared(const Eigen::Vector3d& q) const {
  double best = std::numeric_limits<double>::infinity();
  search(root_, q, best);
  return best;
}

std::vector<Eigen::Vector3d> surface_voxels(const Volume4D& v, double isovalue, std::int64_t t) {
  const Dims4& d = v.dims();
  std::vector<Eigen::Vector3d> out;
  auto above = [&](std::int64_t x, std::int64_t y, std::int64_t z) { return v(x, y, z, t) - isovalue >= 0.0; };
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const bool s = above(x, y, z);
        const bool crossing = (x > 0 && above(x - 1, y, z) != s) || (x + 1 < d.x && above(x + 1, y, z) != s) ||
                              (y > 0 && above(x, y - 1, z) != s) || (y + 1 < d.y && above(x, y + 1, z) != s) ||
                              (z > 0 && above(x, y, z - 1) != s) || (z + 1 < d.z && above(x, y, z + 1) != s);
        if (crossing) out.emplace_back(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z));
      }
  return out;
}

namespace {

double directed(const std::vector<Eigen::Vector3d>& from, const KdTree& to) {
  double s = 0.0;
  for (const auto& p : from) s += std::sqrt(to.nearest_squared(p));
  return s / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const Volume4D& a, const Volume4D& b, double isovalue) {
  detail::require_same_dims(a.dims(), b.dims());
  double total = 0.0;
  int counted = 0;
  for (std::int64_t t = 0; t < a.dims().t; ++t) {
    auto pa = surface_voxels(a, isovalue, t);
    auto pb = surface_voxels(b, isovalue, t);
    if (pa.empty() || pb.empty()) continue;
    const KdTree ta(pa), tb(pb);
    total += 0.5 * (directed(pa, tb) + directed(pb, ta));
    ++counted;
  }
  if (counted == 0) throw Error("no surface at isovalue " + std::to_string(isovalue) + " in both volumes");
  return total / counted;
}

}  // namespace ecnr
