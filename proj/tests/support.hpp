#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "ecnr/volume.hpp"

namespace testing {

inline ecnr::Volume4D random_volume(const ecnr::Dims4& d, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  ecnr::Volume4D v(d);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.values()[i] = dist(rng);
  return v;
}

/// Smooth field: a sum of Gaussians drifting over time.
inline ecnr::Volume4D moving_gaussians(const ecnr::Dims4& d, int count = 3) {
  struct G {
    double c[3], vel[3], sigma, amp;
  };
  const G all[3] = {{{-0.5, -0.3, 0.0}, {0.6, 0.2, 0.1}, 0.25, 1.0},
                    {{0.4, 0.4, -0.3}, {-0.3, -0.5, 0.4}, 0.20, 0.8},
                    {{0.0, -0.4, 0.5}, {0.2, 0.5, -0.6}, 0.30, 0.6}};
  ecnr::Volume4D v(d);
  auto coord = [](std::int64_t i, std::int64_t n) { return (static_cast<double>(i) + 0.5) / static_cast<double>(n) * 2.0 - 1.0; };
  for (std::int64_t t = 0; t < d.t; ++t) {
    const double s = d.t > 1 ? static_cast<double>(t) / static_cast<double>(d.t - 1) : 0.0;
    for (std::int64_t z = 0; z < d.z; ++z)
      for (std::int64_t y = 0; y < d.y; ++y)
        for (std::int64_t x = 0; x < d.x; ++x) {
          const double p[3] = {coord(x, d.x), coord(y, d.y), coord(z, d.z)};
          double sum = 0.0;
          for (int k = 0; k < count; ++k) {
            double r2 = 0.0;
            for (int a = 0; a < 3; ++a) {
              const double q = p[a] - (all[k].c[a] + all[k].vel[a] * s);
              r2 += q * q;
            }
            sum += all[k].amp * std::exp(-r2 / (2.0 * all[k].sigma * all[k].sigma));
          }
          v(x, y, z, t) = static_cast<float>(sum);
        }
  }
  return v;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ecnr_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
