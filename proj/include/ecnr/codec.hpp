#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "ecnr/cnn.hpp"
#include "ecnr/compressor.hpp"
#include "ecnr/pyramid.hpp"
#include "ecnr/siren.hpp"
#include "ecnr/volume.hpp"

namespace ecnr {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'E', 'C', 'N', 'R'};
inline constexpr std::uint16_t kFormatVersion = 1;

struct EncodeConfig {
  PyramidConfig pyramid;
  std::vector<int> blocks_per_mlp;  ///< coarsest scale first; empty selects 8, 16, 32, ...
  TrainSchedule schedule;
  int latent_dim = 16;
  int neurons = 24;
  double omega0 = 30.0;
  int bits = 8;
  int finetune_epochs = 75;
  double finetune_lr = 1e-5;
  bool enable_cnn = false;
  CnnConfig cnn;
  int cnn_epochs = 100;
  double cnn_lr = 1e-5;
  int cnn_bits = 9;
  int kmeans_iters = 50;  ///< Lloyd iterations of the block assignment
  std::uint64_t seed = 1;
  std::ostream* log = nullptr;  ///< key=value progress records

  /// Blocks per MLP for each scale, coarsest first.
  std::vector<int> resolved_blocks_per_mlp() const;
  void validate(const Dims4& dims) const;
};

struct ContainerHeader {
  Dims4 dims;
  ValueRange range;
  int scales = 1;
  std::array<std::int64_t, 3> block{};
  int latent_dim = 16;
  int neurons = 24;
  float omega0 = 30.0f;
  int bits = 8;
  bool cnn_present = false;

  MlpGroupConfig mlp_config(int m) const;
  PyramidConfig pyramid() const;
};

/// Everything stored for one scale.
struct ScaleRecord {
  int scale = 1;
  std::uint32_t m = 0;
  std::vector<bool> effective;            ///< per block of the scale grid, raster order
  std::vector<std::uint32_t> assignment;  ///< MLP id per effective block, raster order
  Eigen::MatrixXf latents;                ///< effective blocks x latent_dim
  std::vector<bool> mask;                 ///< kept flag per pruning candidate, canonical order
  QuantizedScale<float> quantized;
};

struct Container {
  ContainerHeader header;
  std::vector<ScaleRecord> scales;  ///< coarsest first
  std::optional<CnnQuantized<float>> cnn;
  bool complete = true;  ///< false when parsed from a truncated file
};

/// Byte counts per container component (payload parts measured before entropy coding).
struct StorageBreakdown {
  struct Scale {
    int scale = 1;
    std::size_t header = 0, latents = 0, mask = 0, codebooks = 0, indices = 0;
    std::size_t total() const { return header + latents + mask + codebooks + indices; }
  };
  std::size_t fixed_header = 0;
  std::vector<Scale> scales;
  std::size_t cnn = 0;
  std::size_t payload_raw = 0;
  std::size_t payload_coded = 0;
  std::size_t file = 0;
};

std::vector<std::uint8_t> serialize(const Container& c);
/// Parses a container. With `allow_partial`, a truncated file yields the scales that are
/// complete (coarsest first) and `complete == false`.
Container deserialize(std::span<const std::uint8_t> bytes, bool allow_partial = false);
StorageBreakdown storage(const Container& c);

/// Rebuilds the MLP group of a scale from its stored record.
MlpGroup<float> rebuild_group(const ContainerHeader& h, const ScaleRecord& r);
/// Decoded content (coarsest scale) or residual of one scale at that scale's resolution.
Volume4D decode_scale_content(const ContainerHeader& h, const ScaleRecord& r);

struct ScaleStats {
  int scale = 1;
  std::int64_t blocks = 0;
  std::int64_t effective = 0;
  int mlps = 0;
  double sparsity = 0.0;
  double psnr = 0.0;  ///< reconstruction at this scale against the downsampled input
};

struct EncodeResult {
  Container container;
  std::vector<std::uint8_t> bytes;
  std::vector<ScaleStats> stats;  ///< coarsest first
  double psnr = 0.0;              ///< of the decoded volume against the input
  double compression_rate = 0.0;  ///< raw bytes / container bytes
};

EncodeResult encode(const Volume4D& v, const EncodeConfig& cfg);

/// Full decode (all scales, CNN when present).
Volume4D decode(const Container& c);
Volume4D decode(std::span<const std::uint8_t> bytes);
/// Reconstruction from scales `scales`..`upto`, upsampled to full resolution. The CNN is
/// applied only when upto == 1. Works on truncated files as long as those scales are present.
Volume4D decode_scale(const Container& c, int upto);
Volume4D decode_scale(std::span<const std::uint8_t> bytes, int upto);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Human-readable summary: header fields, per-scale sizes (coarsest first), storage shares.
void describe(const Container& c, std::size_t file_size, std::ostream& out);

}  // namespace ecnr
