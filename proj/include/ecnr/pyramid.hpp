#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ecnr/volume.hpp"

namespace ecnr {

/// Laplacian-pyramid layout. Scale 1 is the full resolution, scale `scales` the coarsest.
struct PyramidConfig {
  int scales = 3;
  std::array<std::int64_t, 3> block = {16, 16, 16};
  double tau = 1e-4;  ///< L2-norm threshold below which a residual block is dropped

  std::int64_t block_voxels() const { return block[0] * block[1] * block[2]; }
};

/// Dimensions of the encoding target at `scale` (1-based).
Dims4 scale_dims(const Dims4& full, int scale);

/// Throws ConfigError naming the first axis that breaks divisibility by 2^(i-1) * block.
void validate(const PyramidConfig& cfg, const Dims4& full);

struct BlockSpec {
  int scale = 1;
  std::array<std::int64_t, 4> origin{};  ///< voxel offset (x, y, z, t) inside the scale grid
  std::int64_t linear_id = 0;
};

/// Spatial blocks of one scale, enumerated in (t, z, y, x) raster order.
struct BlockGrid {
  int scale = 1;
  std::array<std::int64_t, 4> counts{};
  std::array<std::int64_t, 3> block{};
  std::vector<bool> effective;
  std::vector<BlockSpec> specs;

  std::int64_t size() const { return static_cast<std::int64_t>(specs.size()); }
  std::int64_t effective_count() const;
  /// Linear ids of the effective blocks, ascending.
  std::vector<std::int64_t> effective_ids() const;
};

/// Ground-truth pyramid: element i holds downsample^i(v), i.e. scale i+1.
template <typename Scalar>
std::vector<Volume4<Scalar>> build_targets(const Volume4<Scalar>& v, const PyramidConfig& cfg) {
  validate(cfg, v.dims());
  std::vector<Volume4<Scalar>> levels;
  levels.reserve(cfg.scales);
  levels.push_back(v);
  for (int i = 1; i < cfg.scales; ++i) levels.push_back(downsample(levels.back()));
  return levels;
}

BlockGrid partition(int scale, const PyramidConfig& cfg, const Dims4& target_dims);

/// Marks blocks with residual L2 norm >= tau as effective; every block is effective at the coarsest scale.
template <typename Scalar>
BlockGrid filter_effective(BlockGrid grid, const Volume4<Scalar>& target, double tau, bool coarsest);

template <typename Scalar>
void check_block(const Volume4<Scalar>& v, const BlockSpec& spec, const std::array<std::int64_t, 3>& block) {
  const Dims4& d = v.dims();
  const auto& o = spec.origin;
  if (o[0] < 0 || o[1] < 0 || o[2] < 0 || o[3] < 0 || o[0] + block[0] > d.x || o[1] + block[1] > d.y ||
      o[2] + block[2] > d.z || o[3] >= d.t)
    throw Error("block " + std::to_string(spec.linear_id) + " lies outside volume " + d.str());
}

/// Copies the block at spec.origin (one timestep), x fastest.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> extract_block(const Volume4<Scalar>& v, const BlockSpec& spec,
                                                       const std::array<std::int64_t, 3>& block) {
  check_block(v, spec, block);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(block[0] * block[1] * block[2]);
  const auto& o = spec.origin;
  Eigen::Index k = 0;
  for (std::int64_t z = 0; z < block[2]; ++z)
    for (std::int64_t y = 0; y < block[1]; ++y) {
      const Scalar* row = &v.values()[v.index(o[0], o[1] + y, o[2] + z, o[3])];
      for (std::int64_t x = 0; x < block[0]; ++x) out[k++] = row[x];
    }
  return out;
}

template <typename Scalar, typename Derived>
void scatter_block(Volume4<Scalar>& v, const BlockSpec& spec, const std::array<std::int64_t, 3>& block,
                   const Eigen::MatrixBase<Derived>& voxels) {
  check_block(v, spec, block);
  if (voxels.size() != block[0] * block[1] * block[2]) throw Error("block voxel count mismatch");
  const auto& o = spec.origin;
  Eigen::Index k = 0;
  for (std::int64_t z = 0; z < block[2]; ++z)
    for (std::int64_t y = 0; y < block[1]; ++y) {
      Scalar* row = &v.values()[v.index(o[0], o[1] + y, o[2] + z, o[3])];
      for (std::int64_t x = 0; x < block[0]; ++x) row[x] = static_cast<Scalar>(voxels(k++));
    }
}

template <typename Scalar>
BlockGrid filter_effective(BlockGrid grid, const Volume4<Scalar>& target, double tau, bool coarsest) {
  grid.effective.assign(grid.specs.size(), true);
  if (coarsest) return grid;
  for (std::size_t b = 0; b < grid.specs.size(); ++b) {
    const auto voxels = extract_block(target, grid.specs[b], grid.block);
    const double norm = std::sqrt(voxels.template cast<double>().squaredNorm());
    grid.effective[b] = norm >= tau;
  }
  return grid;
}

/// Runs the coarse-to-fine recurrence. `fit(scale, target)` returns the decoded
/// version of `target`; residual targets are formed against the decoded coarser scale.
template <typename Scalar, typename Fit>
Volume4<Scalar> laplacian_encode(const Volume4<Scalar>& v, const PyramidConfig& cfg, Fit&& fit) {
  const auto truth = build_targets(v, cfg);
  Volume4<Scalar> recon = fit(cfg.scales, truth[cfg.scales - 1]);
  for (int i = cfg.scales - 1; i >= 1; --i) {
    const Volume4<Scalar> up = upsample(recon);
    const Volume4<Scalar> target = residual(truth[i - 1], up);
    recon = combine(up, fit(i, target));
  }
  return recon;
}

/// Inverse recurrence. `decoded(scale)` yields the decoded content (coarsest) or residual.
/// Scales below `upto` are skipped and the result is upsampled back to full resolution.
template <typename Scalar, typename Decoded>
Volume4<Scalar> laplacian_decode(int scales, int upto, Decoded&& decoded) {
  Volume4<Scalar> recon = decoded(scales);
  for (int i = scales - 1; i >= upto; --i) recon = combine(upsample(recon), decoded(i));
  for (int i = upto - 1; i >= 1; --i) recon = upsample(recon);
  return recon;
}

}  // namespace ecnr
