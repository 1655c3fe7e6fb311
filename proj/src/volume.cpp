#include "ecnr/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace ecnr {

static_assert(std::endian::native == std::endian::little, "raw volume I/O assumes a little-endian host");

std::string Dims4::str() const {
  return std::to_string(x) + "x" + std::to_string(y) + "x" + std::to_string(z) + "x" + std::to_string(t);
}

Volume4D load_raw(const std::filesystem::path& path, const Dims4& dims) {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0 || dims.t <= 0)
    throw ConfigError("volume dimensions must be positive, got " + dims.str());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto expected = static_cast<std::uintmax_t>(dims.count()) * sizeof(float);
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected)
    throw FormatError("size mismatch for " + path.string() + ": expected " + std::to_string(expected) +
                      " bytes for " + dims.str() + ", found " + std::to_string(actual));
  Volume4D v(dims);
  in.read(reinterpret_cast<char*>(v.values().data()), static_cast<std::streamsize>(expected));
  if (!in) throw FormatError("short read from " + path.string());
  const float* p = v.values().data();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(p[i])) throw FormatError("non-finite value at flat index " + std::to_string(i));
  }
  return v;
}

void save_raw(const std::filesystem::path& path, const Volume4D& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.values().data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!out) throw FormatError("write failed for " + path.string());
}

std::pair<Volume4D, ValueRange> normalize(const Volume4D& v) {
  if (v.size() == 0) throw Error("cannot normalize an empty volume");
  const double lo = v.values().minCoeff();
  const double hi = v.values().maxCoeff();
  ValueRange range;
  if (hi == lo) {
    // constant input: one ulp on either side of the value
    const float c = v.values()[0];
    const float up = std::nextafter(c, std::numeric_limits<float>::infinity()) - c;
    const float down = c - std::nextafter(c, -std::numeric_limits<float>::infinity());
    const float u = c == 0.0f ? 1.0f : std::max(up, down);
    range.lo = c - u;
    range.hi = c + u;
    range.degenerate = true;
    return {Volume4D(v.dims()), range};
  }
  range.lo = static_cast<float>(lo);
  range.hi = static_cast<float>(hi);
  const double span = hi - lo;
  Volume4D out(v.dims());
  auto src = v.values().array().template cast<double>();
  out.values() = ((2.0 * (src - lo) - span) / span).template cast<float>();
  return {std::move(out), range};
}

Volume4D denormalize(const Volume4D& v, const ValueRange& range) {
  const double lo = range.lo, half = (static_cast<double>(range.hi) - lo) / 2.0;
  Volume4D out(v.dims());
  out.values() = ((v.values().array().template cast<double>() + 1.0) * half + lo).template cast<float>();
  return out;
}

}  // namespace ecnr
