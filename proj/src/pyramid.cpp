#include "ecnr/pyramid.hpp"

#include <algorithm>

namespace ecnr {

Dims4 scale_dims(const Dims4& full, int scale) {
  const std::int64_t f = std::int64_t{1} << (scale - 1);
  return Dims4{full.x / f, full.y / f, full.z / f, full.t / f};
}

void validate(const PyramidConfig& cfg, const Dims4& full) {
  if (cfg.scales < 1 || cfg.scales > 16) throw ConfigError("scale count must be in [1, 16]");
  for (int a = 0; a < 3; ++a)
    if (cfg.block[a] <= 0) throw ConfigError(std::string("block extent along ") + kAxisNames[a] + " must be positive");
  if (cfg.tau < 0) throw ConfigError("residual threshold must be non-negative");
  for (int a = 0; a < 4; ++a)
    if (full[a] <= 0) throw ConfigError(std::string("volume extent along ") + kAxisNames[a] + " must be positive");
  for (int i = 1; i <= cfg.scales; ++i) {
    const std::int64_t f = std::int64_t{1} << (i - 1);
    for (int a = 0; a < 4; ++a) {
      const std::int64_t unit = a < 3 ? f * cfg.block[a] : f;
      if (full[a] % unit != 0)
        throw ConfigError(std::string("axis ") + kAxisNames[a] + " extent " + std::to_string(full[a]) +
                          " is not divisible by " + std::to_string(unit) + " required at scale " + std::to_string(i));
    }
  }
}

BlockGrid partition(int scale, const PyramidConfig& cfg, const Dims4& target_dims) {
  BlockGrid grid;
  grid.scale = scale;
  grid.block = cfg.block;
  for (int a = 0; a < 3; ++a) {
    if (target_dims[a] % cfg.block[a] != 0)
      throw ConfigError(std::string("axis ") + kAxisNames[a] + " extent " + std::to_string(target_dims[a]) +
                        " is not a multiple of the block extent " + std::to_string(cfg.block[a]));
    grid.counts[a] = target_dims[a] / cfg.block[a];
  }
  grid.counts[3] = target_dims.t;
  const auto& c = grid.counts;
  grid.specs.reserve(static_cast<std::size_t>(c[0] * c[1] * c[2] * c[3]));
  std::int64_t id = 0;
  for (std::int64_t t = 0; t < c[3]; ++t)
    for (std::int64_t z = 0; z < c[2]; ++z)
      for (std::int64_t y = 0; y < c[1]; ++y)
        for (std::int64_t x = 0; x < c[0]; ++x)
          grid.specs.push_back(BlockSpec{scale, {x * cfg.block[0], y * cfg.block[1], z * cfg.block[2], t}, id++});
  grid.effective.assign(grid.specs.size(), true);
  return grid;
}

std::int64_t BlockGrid::effective_count() const {
  return std::count(effective.begin(), effective.end(), true);
}

std::vector<std::int64_t> BlockGrid::effective_ids() const {
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < effective.size(); ++i)
    if (effective[i]) ids.push_back(static_cast<std::int64_t>(i));
  return ids;
}

}  // namespace ecnr
