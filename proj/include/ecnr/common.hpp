#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ecnr {

/// Base class for every error raised by the codec.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (dimensions, divisibility, schedule).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated input files and containers.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Seeded 64-bit generator with portable uniform draws. std::uniform_real_distribution
/// is implementation-defined, which would make containers differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from a base seed and a tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Sets the worker count used by the parallel loops (no-op without OpenMP).
void set_thread_count(int threads);
int thread_count();

}  // namespace ecnr
