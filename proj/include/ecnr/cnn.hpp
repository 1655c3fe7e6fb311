#pragma once

#include <Eigen/Core>

#include <cmath>
#include <ostream>
#include <vector>

#include "ecnr/compressor.hpp"
#include "ecnr/volume.hpp"

namespace ecnr {

/// Shallow 3D CNN: `layers` convolutions, ReLU after all but the last, replicate padding,
/// and a residual connection from input to output.
struct CnnConfig {
  int layers = 5;
  int channels = 32;
  int kernel = 3;

  int taps() const { return kernel * kernel * kernel; }
  int in_channels(int l) const { return l == 0 ? 1 : channels; }
  int out_channels(int l) const { return l == layers - 1 ? 1 : channels; }
  void validate() const;
};

template <typename Scalar>
struct CnnParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  CnnConfig cfg;
  std::vector<Matrix> weights;  ///< per layer: (taps * cin) x cout, row = tap * cin + channel
  std::vector<RowVector> biases;

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
  /// Flattened parameters: per layer, weights (column-major) then biases.
  std::vector<double> flatten() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index i = 0; i < weights[l].size(); ++i) out.push_back(static_cast<double>(weights[l].data()[i]));
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) out.push_back(static_cast<double>(biases[l].data()[i]));
    }
    return out;
  }
  template <typename F>
  void for_each_param(F&& f) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (Eigen::Index i = 0; i < weights[l].size(); ++i) f(weights[l].data()[i]);
      for (Eigen::Index i = 0; i < biases[l].size(); ++i) f(biases[l].data()[i]);
    }
  }
};

template <typename Scalar>
CnnParams<Scalar> zero_cnn(const CnnConfig& cfg) {
  cfg.validate();
  CnnParams<Scalar> p;
  p.cfg = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    p.weights.push_back(CnnParams<Scalar>::Matrix::Zero(cfg.taps() * cfg.in_channels(l), cfg.out_channels(l)));
    p.biases.push_back(CnnParams<Scalar>::RowVector::Zero(cfg.out_channels(l)));
  }
  return p;
}

/// He-uniform weights, zero biases, and a zero final layer so the initial network is the identity.
template <typename Scalar>
CnnParams<Scalar> init_cnn(const CnnConfig& cfg, std::uint64_t seed) {
  auto p = zero_cnn<Scalar>(cfg);
  Rng rng(seed);
  for (int l = 0; l + 1 < cfg.layers; ++l) {
    const double bound = std::sqrt(6.0 / (cfg.taps() * cfg.in_channels(l)));
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i)
      p.weights[l].data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  return p;
}

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Grid3 {
  std::int64_t nx, ny, nz;
  std::int64_t voxels() const { return nx * ny * nz; }
};

// Patch matrix for slice z: one row per voxel of the slice, columns tap-major then channel.
template <typename Scalar>
void im2col(const RowMatrix<Scalar>& in, const Grid3& g, int kernel, std::int64_t z, RowMatrix<Scalar>& col) {
  const auto cin = in.cols();
  const int r = kernel / 2;
  col.resize(g.nx * g.ny, static_cast<Eigen::Index>(kernel * kernel * kernel) * cin);
  int tap = 0;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx, ++tap) {
        const std::int64_t sz = std::clamp<std::int64_t>(z + dz, 0, g.nz - 1);
        for (std::int64_t y = 0; y < g.ny; ++y) {
          const std::int64_t sy = std::clamp<std::int64_t>(y + dy, 0, g.ny - 1);
          for (std::int64_t x = 0; x < g.nx; ++x) {
            const std::int64_t sx = std::clamp<std::int64_t>(x + dx, 0, g.nx - 1);
            col.row(y * g.nx + x).segment(tap * cin, cin) = in.row((sz * g.ny + sy) * g.nx + sx);
          }
        }
      }
}

// Adjoint of im2col: accumulates patch gradients back onto the (clamped) source voxels.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& gcol, const Grid3& g, int kernel, std::int64_t z, RowMatrix<Scalar>& gin) {
  const auto cin = gin.cols();
  const int r = kernel / 2;
  int tap = 0;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx, ++tap) {
        const std::int64_t sz = std::clamp<std::int64_t>(z + dz, 0, g.nz - 1);
        for (std::int64_t y = 0; y < g.ny; ++y) {
          const std::int64_t sy = std::clamp<std::int64_t>(y + dy, 0, g.ny - 1);
          for (std::int64_t x = 0; x < g.nx; ++x) {
            const std::int64_t sx = std::clamp<std::int64_t>(x + dx, 0, g.nx - 1);
            gin.row((sz * g.ny + sy) * g.nx + sx) += gcol.row(y * g.nx + x).segment(tap * cin, cin);
          }
        }
      }
}

}  // namespace detail

template <typename Scalar>
struct CnnCache {
  std::vector<detail::RowMatrix<Scalar>> inputs;  ///< input of each layer (post-activation)
  std::vector<detail::RowMatrix<Scalar>> pre;     ///< pre-activation output of each layer
};

template <typename Scalar>
struct CnnGrad {
  std::vector<typename CnnParams<Scalar>::Matrix> weights;
  std::vector<typename CnnParams<Scalar>::RowVector> biases;
};

/// Convolution stack over one timestep, without the residual add. `x` holds one voxel per row.
template <typename Scalar>
detail::RowMatrix<Scalar> cnn_stack(const CnnParams<Scalar>& p, const detail::RowMatrix<Scalar>& x,
                                    const detail::Grid3& g, CnnCache<Scalar>* cache = nullptr) {
  using RM = detail::RowMatrix<Scalar>;
  RM h = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (int l = 0; l < p.cfg.layers; ++l) {
    RM out(g.voxels(), p.cfg.out_channels(l));
    const std::int64_t plane = g.nx * g.ny;
#pragma omp parallel
    {
      RM col;
#pragma omp for schedule(static)
      for (std::int64_t z = 0; z < g.nz; ++z) {
        detail::im2col(h, g, p.cfg.kernel, z, col);
        out.middleRows(z * plane, plane).noalias() = col * p.weights[l];
        out.middleRows(z * plane, plane).rowwise() += p.biases[l];
      }
    }
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(out);
    }
    h = l + 1 < p.cfg.layers ? RM(out.cwiseMax(Scalar(0))) : out;
  }
  return h;
}

/// y = x + stack(x), applied independently to every timestep.
template <typename Scalar>
Volume4<Scalar> cnn_forward(const CnnParams<Scalar>& p, const Volume4<Scalar>& v) {
  const Dims4& d = v.dims();
  const detail::Grid3 g{d.x, d.y, d.z};
  Volume4<Scalar> out(d);
  for (std::int64_t t = 0; t < d.t; ++t) {
    detail::RowMatrix<Scalar> x = v.values().segment(t * g.voxels(), g.voxels());
    const auto s = cnn_stack(p, x, g);
    out.values().segment(t * g.voxels(), g.voxels()) = x.col(0) + s.col(0);
  }
  return out;
}

/// Parameter gradients of mean((x + stack(x) - target)^2) for one timestep. Returns the loss.
template <typename Scalar>
double cnn_backward(const CnnParams<Scalar>& p, const detail::RowMatrix<Scalar>& x,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& target, const detail::Grid3& g,
                    CnnGrad<Scalar>& grad) {
  using RM = detail::RowMatrix<Scalar>;
  CnnCache<Scalar> cache;
  const RM s = cnn_stack(p, x, g, &cache);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> err = x.col(0) + s.col(0) - target;
  const auto n = static_cast<double>(g.voxels());
  const double loss = static_cast<double>(err.squaredNorm()) / n;

  grad.weights.resize(static_cast<std::size_t>(p.cfg.layers));
  grad.biases.resize(static_cast<std::size_t>(p.cfg.layers));
  RM gout = err * static_cast<Scalar>(2.0 / n);
  const std::int64_t plane = g.nx * g.ny;
  for (int l = p.cfg.layers - 1; l >= 0; --l) {
    RM gpre = gout;
    if (l + 1 < p.cfg.layers) gpre.array() *= (cache.pre[l].array() > Scalar(0)).template cast<Scalar>();
    grad.weights[l].setZero(p.weights[l].rows(), p.weights[l].cols());
    grad.biases[l] = gpre.colwise().sum();
    RM gin = l > 0 ? RM::Zero(g.voxels(), p.cfg.in_channels(l)) : RM();
    RM col, gcol;
    for (std::int64_t z = 0; z < g.nz; ++z) {
      detail::im2col(cache.inputs[l], g, p.cfg.kernel, z, col);
      grad.weights[l].noalias() += col.transpose() * gpre.middleRows(z * plane, plane);
      if (l > 0) {
        gcol.noalias() = gpre.middleRows(z * plane, plane) * p.weights[l].transpose();
        detail::col2im_add(gcol, g, p.cfg.kernel, z, gin);
      }
    }
    if (l > 0) gout = std::move(gin);
  }
  return loss;
}

/// Adam (no weight decay) on MSE between x + stack(x) and the ground truth, one step per
/// timestep per epoch. Returns the mean loss of each epoch.
template <typename Scalar>
std::vector<double> train_cnn(CnnParams<Scalar>& p, const Volume4<Scalar>& decoded, const Volume4<Scalar>& truth,
                              int epochs, double lr, const AdamConfig& adam = {}, std::ostream* log = nullptr) {
  detail::require_same_dims(decoded.dims(), truth.dims());
  const Dims4& d = decoded.dims();
  const detail::Grid3 g{d.x, d.y, d.z};
  auto m1 = zero_cnn<Scalar>(p.cfg), m2 = zero_cnn<Scalar>(p.cfg);
  std::vector<double> history;
  CnnGrad<Scalar> grad;
  int step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double total = 0.0;
    for (std::int64_t t = 0; t < d.t; ++t) {
      detail::RowMatrix<Scalar> x = decoded.values().segment(t * g.voxels(), g.voxels());
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = truth.values().segment(t * g.voxels(), g.voxels());
      total += cnn_backward(p, x, y, g, grad);
      ++step;
      const double bc1 = 1.0 - std::pow(adam.beta1, step), bc2 = 1.0 - std::pow(adam.beta2, step);
      for (int l = 0; l < p.cfg.layers; ++l) {
        detail::adam_apply(p.weights[l], grad.weights[l], m1.weights[l], m2.weights[l], lr, bc1, bc2, adam, 0.0);
        detail::adam_apply(p.biases[l], grad.biases[l], m1.biases[l], m2.biases[l], lr, bc1, bc2, adam, 0.0);
      }
    }
    const double mean = total / static_cast<double>(std::max<std::int64_t>(1, d.t));
    if (!std::isfinite(mean)) throw DivergenceError("CNN training diverged at epoch " + std::to_string(epoch));
    history.push_back(mean);
    if (log && (epoch % 10 == 0 || epoch + 1 == epochs)) *log << "event=cnn epoch=" << epoch << " loss=" << mean << "\n";
  }
  return history;
}

/// CNN parameters after post-training quantization: one global codebook over all parameters.
template <typename Scalar>
struct CnnQuantized {
  CnnConfig cfg;
  int bits = 9;
  std::vector<Scalar> codebook;          ///< ascending
  std::vector<std::uint32_t> indices;    ///< flatten() order
  double max_radius = 0.0;
};

template <typename Scalar>
CnnQuantized<Scalar> quantize_cnn(const CnnParams<Scalar>& p, int bits = 9) {
  if (bits < 1 || bits > 16) throw ConfigError("CNN quantization bits must lie in [1, 16]");
  CnnQuantized<Scalar> q;
  q.cfg = p.cfg;
  q.bits = bits;
  const auto values = p.flatten();
  const KMeans1D km = kmeans_1d(values, 1 << bits);
  for (double c : km.centroids) q.codebook.push_back(static_cast<Scalar>(c));
  q.codebook.erase(std::unique(q.codebook.begin(), q.codebook.end()), q.codebook.end());
  for (double v : values) {
    const auto idx = nearest_code(q.codebook, static_cast<Scalar>(v));
    q.indices.push_back(idx);
    q.max_radius = std::max(q.max_radius, std::abs(v - static_cast<double>(q.codebook[idx])));
  }
  return q;
}

template <typename Scalar>
CnnParams<Scalar> dequantize_cnn(const CnnQuantized<Scalar>& q) {
  auto p = zero_cnn<Scalar>(q.cfg);
  if (static_cast<Eigen::Index>(q.indices.size()) != p.parameter_count())
    throw FormatError("CNN index count does not match its configuration");
  std::size_t k = 0;
  p.for_each_param([&](Scalar& v) {
    const auto idx = q.indices[k++];
    if (idx >= q.codebook.size()) throw FormatError("CNN quantization index exceeds codebook size");
    v = q.codebook[idx];
  });
  return p;
}

}  // namespace ecnr
