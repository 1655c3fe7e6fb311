#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "ecnr/common.hpp"

namespace ecnr {

/// Extent of a space-time grid. x varies fastest in memory, t slowest.
struct Dims4 {
  std::int64_t x = 0, y = 0, z = 0, t = 0;

  std::int64_t count() const { return x * y * z * t; }
  std::int64_t operator[](int axis) const { return std::array{x, y, z, t}[axis]; }
  std::int64_t& operator[](int axis) { return *std::array{&x, &y, &z, &t}[axis]; }
  bool operator==(const Dims4&) const = default;

  std::string str() const;
};

inline constexpr std::array<char, 4> kAxisNames = {'x', 'y', 'z', 't'};

/// Dense scalar field over an (x, y, z, t) grid.
template <typename Scalar>
class Volume4 {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Volume4() = default;
  explicit Volume4(const Dims4& dims, Scalar fill = Scalar(0))
      : dims_(dims), values_(Vector::Constant(dims.count(), fill)) {}
  Volume4(const Dims4& dims, Vector values) : dims_(dims), values_(std::move(values)) {
    if (values_.size() != dims_.count()) throw Error("volume value count does not match " + dims_.str());
  }

  const Dims4& dims() const { return dims_; }
  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }

  Eigen::Index index(std::int64_t xi, std::int64_t yi, std::int64_t zi, std::int64_t ti) const {
    return ((ti * dims_.z + zi) * dims_.y + yi) * dims_.x + xi;
  }
  Scalar& operator()(std::int64_t xi, std::int64_t yi, std::int64_t zi, std::int64_t ti) {
    return values_[index(xi, yi, zi, ti)];
  }
  Scalar operator()(std::int64_t xi, std::int64_t yi, std::int64_t zi, std::int64_t ti) const {
    return values_[index(xi, yi, zi, ti)];
  }

  template <typename Other>
  Volume4<Other> cast() const {
    return Volume4<Other>(dims_, values_.template cast<Other>());
  }

  bool operator==(const Volume4& o) const { return dims_ == o.dims_ && values_ == o.values_; }

 private:
  Dims4 dims_;
  Vector values_;
};

using Volume4D = Volume4<float>;

/// Value range used to map a volume into [-1, 1].
struct ValueRange {
  float lo = -1.0f;
  float hi = 1.0f;
  bool degenerate = false;  ///< set when the source volume was constant
};

Volume4D load_raw(const std::filesystem::path& path, const Dims4& dims);
void save_raw(const std::filesystem::path& path, const Volume4D& v);

/// Maps values to 2*(x-lo)/(hi-lo)-1. A constant volume c maps to all zeros with
/// range (c-h, c+h), so the standard inverse recovers c.
std::pair<Volume4D, ValueRange> normalize(const Volume4D& v);
Volume4D denormalize(const Volume4D& v, const ValueRange& range);

namespace detail {

// Doubles one axis: out[2i] = in[i], out[2i+1] = (in[i] + in[i+1]) / 2, in[n] := in[n-1].
template <typename Scalar>
Volume4<Scalar> upsample_axis(const Volume4<Scalar>& in, int axis) {
  const Dims4& d = in.dims();
  Dims4 od = d;
  od[axis] *= 2;
  std::int64_t inner = 1, outer = 1;
  for (int a = 0; a < axis; ++a) inner *= d[a];
  for (int a = axis + 1; a < 4; ++a) outer *= d[a];
  const std::int64_t n = d[axis];
  Volume4<Scalar> out(od);
  const Scalar* src = in.values().data();
  Scalar* dst = out.values().data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < n; ++i) {
      const Scalar* a = src + (o * n + i) * inner;
      const Scalar* b = src + (o * n + std::min(i + 1, n - 1)) * inner;
      Scalar* even = dst + (o * 2 * n + 2 * i) * inner;
      Scalar* odd = even + inner;
      for (std::int64_t r = 0; r < inner; ++r) {
        even[r] = a[r];
        odd[r] = (a[r] + b[r]) / Scalar(2);
      }
    }
  }
  return out;
}

inline void require_same_dims(const Dims4& a, const Dims4& b) {
  if (!(a == b)) throw Error("dimension mismatch: " + a.str() + " vs " + b.str());
}

}  // namespace detail

/// Strided subsampling by two along x, y, z and t.
template <typename Scalar>
Volume4<Scalar> downsample(const Volume4<Scalar>& v) {
  const Dims4& d = v.dims();
  for (int a = 0; a < 4; ++a) {
    if (d[a] % 2 != 0)
      throw ConfigError(std::string("cannot downsample: axis ") + kAxisNames[a] + " has odd extent " +
                        std::to_string(d[a]));
  }
  Volume4<Scalar> out(Dims4{d.x / 2, d.y / 2, d.z / 2, d.t / 2});
  const Dims4& od = out.dims();
  for (std::int64_t t = 0; t < od.t; ++t)
    for (std::int64_t z = 0; z < od.z; ++z)
      for (std::int64_t y = 0; y < od.y; ++y)
        for (std::int64_t x = 0; x < od.x; ++x) out(x, y, z, t) = v(2 * x, 2 * y, 2 * z, 2 * t);
  return out;
}

/// Doubles every axis: trilinear in space (x, then y, then z), then linear in time.
/// Even output samples copy the input, so downsample(upsample(v)) == v.
template <typename Scalar>
Volume4<Scalar> upsample(const Volume4<Scalar>& v) {
  Volume4<Scalar> out = detail::upsample_axis(v, 0);
  for (int axis = 1; axis < 4; ++axis) out = detail::upsample_axis(out, axis);
  return out;
}

template <typename Scalar>
Volume4<Scalar> residual(const Volume4<Scalar>& a, const Volume4<Scalar>& b) {
  detail::require_same_dims(a.dims(), b.dims());
  return Volume4<Scalar>(a.dims(), a.values() - b.values());
}

template <typename Scalar>
Volume4<Scalar> combine(const Volume4<Scalar>& a, const Volume4<Scalar>& b) {
  detail::require_same_dims(a.dims(), b.dims());
  return Volume4<Scalar>(a.dims(), a.values() + b.values());
}

}  // namespace ecnr
