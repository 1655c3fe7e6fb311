#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "ecnr/assign.hpp"
#include "ecnr/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ecnr {

/// Stack of `count` equally-shaped matrices in one contiguous buffer, indexed by MLP id.
template <typename Scalar>
class Tensor3 {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using SliceMap = Eigen::Map<Matrix>;
  using ConstSliceMap = Eigen::Map<const Matrix>;

  Tensor3() = default;
  Tensor3(Eigen::Index count, Eigen::Index rows, Eigen::Index cols, Scalar fill = Scalar(0))
      : count_(count), rows_(rows), cols_(cols), data_(Vector::Constant(count * rows * cols, fill)) {}

  Eigen::Index count() const { return count_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  Eigen::Index slice_size() const { return rows_ * cols_; }

  SliceMap slice(Eigen::Index i) { return SliceMap(data_.data() + i * slice_size(), rows_, cols_); }
  ConstSliceMap slice(Eigen::Index i) const { return ConstSliceMap(data_.data() + i * slice_size(), rows_, cols_); }
  auto slice_flat(Eigen::Index i) { return data_.segment(i * slice_size(), slice_size()); }
  auto slice_flat(Eigen::Index i) const { return data_.segment(i * slice_size(), slice_size()); }

  Vector& flat() { return data_; }
  const Vector& flat() const { return data_; }

  bool operator==(const Tensor3& o) const {
    return count_ == o.count_ && rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  Eigen::Index count_ = 0, rows_ = 0, cols_ = 0;
  Vector data_;
};

/// Architecture shared by every MLP of a scale: `hidden_layers` sine layers and one linear output.
struct MlpGroupConfig {
  int m = 1;
  int hidden_layers = 3;
  int neurons = 24;
  int latent_dim = 16;
  double omega0 = 30.0;

  int in_dim() const { return 3 + latent_dim; }
  int layer_count() const { return hidden_layers + 1; }
  int fan_in(int layer) const { return layer == 0 ? in_dim() : neurons; }
  int fan_out(int layer) const { return layer == layer_count() - 1 ? 1 : neurons; }

  // Pruning candidates: every weight except the output layer's, biases of inner layers only.
  bool weight_candidate(int layer) const { return layer < layer_count() - 1; }
  bool bias_candidate(int layer) const { return layer > 0 && layer < layer_count() - 1; }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 2e-5;  ///< decoupled, weights only
};

template <typename Scalar>
struct MlpGroup {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  MlpGroupConfig cfg;
  std::vector<Tensor3<Scalar>> weights;      ///< per layer: (m, fan_in, fan_out)
  std::vector<Tensor3<Scalar>> biases;       ///< per layer: (m, 1, fan_out)
  std::vector<Tensor3<Scalar>> weight_mask;  ///< 1 = kept, 0 = pruned
  std::vector<Tensor3<Scalar>> bias_mask;
  Matrix latents;                            ///< one row per effective block

  std::vector<Tensor3<Scalar>> weight_m, weight_v, bias_m, bias_v;
  Matrix latent_m, latent_v;
  std::vector<int> mlp_steps;
  std::vector<int> latent_steps;

  int layer_count() const { return cfg.layer_count(); }

  /// Zeroes every pruned parameter.
  void apply_masks() {
    for (int l = 0; l < layer_count(); ++l) {
      weights[l].flat().array() *= weight_mask[l].flat().array();
      biases[l].flat().array() *= bias_mask[l].flat().array();
    }
  }
};

/// Allocates a group with zero parameters, full masks and fresh optimizer state.
template <typename Scalar>
MlpGroup<Scalar> make_group(const MlpGroupConfig& cfg, Eigen::Index num_blocks) {
  MlpGroup<Scalar> g;
  g.cfg = cfg;
  for (int l = 0; l < cfg.layer_count(); ++l) {
    g.weights.emplace_back(cfg.m, cfg.fan_in(l), cfg.fan_out(l));
    g.biases.emplace_back(cfg.m, 1, cfg.fan_out(l));
    g.weight_mask.emplace_back(cfg.m, cfg.fan_in(l), cfg.fan_out(l), Scalar(1));
    g.bias_mask.emplace_back(cfg.m, 1, cfg.fan_out(l), Scalar(1));
  }
  g.weight_m = g.weights;
  g.weight_v = g.weights;
  g.bias_m = g.biases;
  g.bias_v = g.biases;
  g.latents = MlpGroup<Scalar>::Matrix::Zero(num_blocks, cfg.latent_dim);
  g.latent_m = g.latents;
  g.latent_v = g.latents;
  g.mlp_steps.assign(static_cast<std::size_t>(cfg.m), 0);
  g.latent_steps.assign(static_cast<std::size_t>(num_blocks), 0);
  return g;
}

/// SIREN initialization: first layer U(-1/fan_in, 1/fan_in), later layers
/// U(-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0), biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// latent codes U(-1e-4, 1e-4).
template <typename Scalar>
MlpGroup<Scalar> init_group(const MlpGroupConfig& cfg, Eigen::Index num_blocks, std::uint64_t seed) {
  auto g = make_group<Scalar>(cfg, num_blocks);
  Rng rng(seed);
  for (int l = 0; l < cfg.layer_count(); ++l) {
    const double fan_in = cfg.fan_in(l);
    const double w_bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / cfg.omega0;
    const double b_bound = 1.0 / std::sqrt(fan_in);
    for (Eigen::Index i = 0; i < g.weights[l].flat().size(); ++i)
      g.weights[l].flat()[i] = static_cast<Scalar>(rng.uniform(-w_bound, w_bound));
    for (Eigen::Index i = 0; i < g.biases[l].flat().size(); ++i)
      g.biases[l].flat()[i] = static_cast<Scalar>(rng.uniform(-b_bound, b_bound));
  }
  for (Eigen::Index i = 0; i < g.latents.size(); ++i) g.latents.data()[i] = static_cast<Scalar>(rng.uniform(-1e-4, 1e-4));
  return g;
}

/// Local voxel coordinates of a block, normalized to [-1, 1] per axis, x fastest.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> block_coordinates(const std::array<std::int64_t, 3>& block) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> c(block[0] * block[1] * block[2], 3);
  auto coord = [](std::int64_t i, std::int64_t n) {
    return n > 1 ? Scalar(-1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1)) : Scalar(0);
  };
  Eigen::Index r = 0;
  for (std::int64_t z = 0; z < block[2]; ++z)
    for (std::int64_t y = 0; y < block[1]; ++y)
      for (std::int64_t x = 0; x < block[0]; ++x, ++r) {
        c(r, 0) = coord(x, block[0]);
        c(r, 1) = coord(y, block[1]);
        c(r, 2) = coord(z, block[2]);
      }
  return c;
}

/// Activations kept from the forward pass of one MLP over one block.
template <typename Scalar>
struct ForwardCache {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<Matrix> hidden;   ///< sin(omega0 * z) of each sine layer
  std::vector<Matrix> cosines;  ///< cos(omega0 * z) of each sine layer
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> output;
};

/// Gradients for one MLP and the latent code of the block it processed.
template <typename Scalar>
struct MlpGrad {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;
  RowVector latent;
};

/// Evaluates MLP `mlp` on an N x 3 coordinate matrix with one latent code. The latent part
/// of the first layer is folded into a per-block bias since it is constant over the block.
template <typename Scalar, typename LatentDerived>
void forward_one(const MlpGroup<Scalar>& g, int mlp, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords,
                 const Eigen::MatrixBase<LatentDerived>& latent, ForwardCache<Scalar>& cache) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const int L = g.layer_count();
  const auto omega = static_cast<Scalar>(g.cfg.omega0);
  if (mlp < 0 || mlp >= g.cfg.m) throw Error("MLP id " + std::to_string(mlp) + " out of range");
  cache.hidden.resize(static_cast<std::size_t>(L - 1));
  cache.cosines.resize(static_cast<std::size_t>(L - 1));

  const auto w0 = g.weights[0].slice(mlp);
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row_bias =
      latent * w0.bottomRows(g.cfg.latent_dim) + g.biases[0].slice(mlp);
  Matrix z = coords * w0.topRows(3);
  z.rowwise() += row_bias;
  for (int l = 0; l < L - 1; ++l) {
    if (l > 0) {
      z.noalias() = cache.hidden[l - 1] * g.weights[l].slice(mlp);
      z.rowwise() += g.biases[l].slice(mlp).row(0);
    }
    z *= omega;
    cache.hidden[l] = z.array().sin().matrix();
    cache.cosines[l] = z.array().cos().matrix();
  }
  cache.output.noalias() = cache.hidden[L - 2] * g.weights[L - 1].slice(mlp).col(0);
  cache.output.array() += g.biases[L - 1].slice(mlp)(0, 0);
}

/// Batched forward: row i of the batch evaluates MLP mlp_ids[i] with latent row i. Returns N x batch.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forward(
    const MlpGroup<Scalar>& g, std::span<const int> mlp_ids,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& latents) {
  if (latents.rows() != static_cast<Eigen::Index>(mlp_ids.size())) throw Error("latent batch size mismatch");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(coords.rows(), static_cast<Eigen::Index>(mlp_ids.size()));
  ForwardCache<Scalar> cache;
  for (std::size_t i = 0; i < mlp_ids.size(); ++i) {
    forward_one(g, mlp_ids[i], coords, latents.row(static_cast<Eigen::Index>(i)), cache);
    out.col(static_cast<Eigen::Index>(i)) = cache.output;
  }
  return out;
}

/// Backpropagates the block MSE mean((output - target)^2) through MLP `mlp`.
/// Pruned parameters receive zero gradient. Returns the loss.
template <typename Scalar, typename LatentDerived, typename TargetDerived>
double backward_one(const MlpGroup<Scalar>& g, int mlp, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords,
                    const Eigen::MatrixBase<LatentDerived>& latent, const Eigen::MatrixBase<TargetDerived>& target,
                    const ForwardCache<Scalar>& cache, MlpGrad<Scalar>& grad) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const int L = g.layer_count();
  const auto omega = static_cast<Scalar>(g.cfg.omega0);
  const auto n = static_cast<Scalar>(coords.rows());
  grad.weights.resize(static_cast<std::size_t>(L));
  grad.biases.resize(static_cast<std::size_t>(L));

  const Vector err = cache.output - target;
  const double loss = static_cast<double>(err.squaredNorm()) / static_cast<double>(coords.rows());
  const Vector gout = err * (Scalar(2) / n);

  grad.weights[L - 1].noalias() = cache.hidden[L - 2].transpose() * gout;
  grad.biases[L - 1].setConstant(1, 1, gout.sum());
  Matrix gh = gout * g.weights[L - 1].slice(mlp).col(0).transpose();
  Matrix gz;
  for (int l = L - 2; l >= 0; --l) {
    gz = gh.cwiseProduct(cache.cosines[l]) * omega;
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> colsum = gz.colwise().sum();
    grad.biases[l] = colsum;
    if (l > 0) {
      grad.weights[l].noalias() = cache.hidden[l - 1].transpose() * gz;
      gh.noalias() = gz * g.weights[l].slice(mlp).transpose();
    } else {
      const auto w0 = g.weights[0].slice(mlp);
      grad.weights[0].resize(g.cfg.in_dim(), g.cfg.fan_out(0));
      grad.weights[0].topRows(3).noalias() = coords.transpose() * gz;
      grad.weights[0].bottomRows(g.cfg.latent_dim).noalias() = latent.transpose() * colsum;
      grad.latent.noalias() = colsum * w0.bottomRows(g.cfg.latent_dim).transpose();
    }
  }
  for (int l = 0; l < L; ++l) {
    grad.weights[l].array() *= g.weight_mask[l].slice(mlp).array();
    grad.biases[l].array() *= g.bias_mask[l].slice(mlp).row(0).array();
  }
  return loss;
}

namespace detail {

template <typename P, typename G, typename M, typename V>
void adam_apply(P&& param, const G& grad, M&& m, V&& v, double lr, double bc1, double bc2, const AdamConfig& cfg,
                double decay) {
  using Scalar = typename std::decay_t<P>::Scalar;
  if (decay != 0.0) param *= static_cast<Scalar>(1.0 - lr * decay);
  m = static_cast<Scalar>(cfg.beta1) * m + static_cast<Scalar>(1.0 - cfg.beta1) * grad;
  v = static_cast<Scalar>(cfg.beta2) * v + static_cast<Scalar>(1.0 - cfg.beta2) * grad.cwiseAbs2();
  param.array() -= static_cast<Scalar>(lr / bc1) * m.array() /
                   ((v.array() / static_cast<Scalar>(bc2)).sqrt() + static_cast<Scalar>(cfg.eps));
}

}  // namespace detail

/// One Adam step on the parameters of MLP `mlp`; weights also receive decoupled decay.
/// Pruned parameters and their moments stay at zero.
template <typename Scalar>
void adam_update_mlp(MlpGroup<Scalar>& g, int mlp, const MlpGrad<Scalar>& grad, double lr, const AdamConfig& cfg) {
  const int t = ++g.mlp_steps[static_cast<std::size_t>(mlp)];
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (int l = 0; l < g.layer_count(); ++l) {
    auto w = g.weights[l].slice(mlp);
    auto wm = g.weight_m[l].slice(mlp);
    auto wv = g.weight_v[l].slice(mlp);
    detail::adam_apply(w, grad.weights[l], wm, wv, lr, bc1, bc2, cfg, cfg.weight_decay);
    const auto mask = g.weight_mask[l].slice(mlp).array();
    w.array() *= mask;
    wm.array() *= mask;
    wv.array() *= mask;

    auto b = g.biases[l].slice(mlp);
    auto bm = g.bias_m[l].slice(mlp);
    auto bv = g.bias_v[l].slice(mlp);
    detail::adam_apply(b, grad.biases[l], bm, bv, lr, bc1, bc2, cfg, 0.0);
    const auto bmask = g.bias_mask[l].slice(mlp).array();
    b.array() *= bmask;
    bm.array() *= bmask;
    bv.array() *= bmask;
  }
}

template <typename Scalar>
void adam_update_latent(MlpGroup<Scalar>& g, Eigen::Index block, const typename MlpGrad<Scalar>::RowVector& grad,
                        double lr, const AdamConfig& cfg) {
  const int t = ++g.latent_steps[static_cast<std::size_t>(block)];
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  auto p = g.latents.row(block);
  auto m = g.latent_m.row(block);
  auto v = g.latent_v.row(block);
  detail::adam_apply(p, grad, m, v, lr, bc1, bc2, cfg, 0.0);
}

/// Applies one Adam step for each (MLP, block) pair; a negative block id skips the latent update.
template <typename Scalar>
void adam_step(MlpGroup<Scalar>& g, std::span<const int> mlp_ids, std::span<const Eigen::Index> block_ids,
               std::span<const MlpGrad<Scalar>> grads, double lr, const AdamConfig& cfg = {}) {
  for (std::size_t i = 0; i < mlp_ids.size(); ++i) {
    adam_update_mlp(g, mlp_ids[i], grads[i], lr, cfg);
    if (block_ids[i] >= 0) adam_update_latent(g, block_ids[i], grads[i].latent, lr, cfg);
  }
}

struct TrainSchedule {
  int epochs = 500;
  double lr = 1e-3;
  double lr_decay = 0.75;  ///< multiplied into the learning rate after each pruning round
  std::vector<int> prune_epochs = {150, 225, 300, 375};
  std::vector<double> prune_sparsity = {0.30, 0.40, 0.45, 0.50};
  double lambda_b = 0.1;
  AdamConfig adam;

  void validate() const;
};

struct TrainResult {
  std::vector<double> epoch_loss;  ///< mean block MSE per epoch
  std::vector<double> block_loss;  ///< per effective block, last epoch
  std::vector<double> mlp_loss;    ///< per MLP average block MSE (L_b), last epoch
};

/// Called at each pruning epoch with the per-MLP average block loss and the target sparsity.
template <typename Scalar>
using PruneHook = std::function<void(MlpGroup<Scalar>&, const std::vector<double>& mlp_loss, double sparsity)>;

inline std::vector<double> mlp_average_loss(const Assignment& a, const std::vector<double>& block_loss) {
  std::vector<double> out(static_cast<std::size_t>(a.m), 0.0);
  for (int c = 0; c < a.m; ++c) {
    const auto& mem = a.members[static_cast<std::size_t>(c)];
    double s = 0.0;
    for (int b : mem) s += block_loss[static_cast<std::size_t>(b)];
    out[static_cast<std::size_t>(c)] = mem.empty() ? 0.0 : s / static_cast<double>(mem.size());
  }
  return out;
}

/// Trains every MLP of a scale on its assigned blocks. Each step, every MLP fits the block in
/// its current slot, so all MLPs advance in lockstep; per-MLP updates are independent, which
/// keeps the result identical for any thread count.
template <typename Scalar>
TrainResult train_scale(MlpGroup<Scalar>& g, const Assignment& a,
                        const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& blocks,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords, const TrainSchedule& sched,
                        const PruneHook<Scalar>& prune = {}, std::ostream* log = nullptr, int scale = 0,
                        int log_every = 25) {
  sched.validate();
  if (a.m != g.cfg.m) throw Error("assignment MLP count does not match the group");
  if (static_cast<Eigen::Index>(blocks.size()) != g.latents.rows()) throw Error("block count does not match latent codes");

  TrainResult result;
  result.block_loss.assign(blocks.size(), 0.0);
  double lr = sched.lr;
  std::size_t next_prune = 0;
  const int slots = a.max_cluster_size();
  const int threads = thread_count();
  std::vector<ForwardCache<Scalar>> caches(static_cast<std::size_t>(threads));
  std::vector<MlpGrad<Scalar>> grads(static_cast<std::size_t>(threads));

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    if (next_prune < sched.prune_epochs.size() && epoch == sched.prune_epochs[next_prune]) {
      const double sparsity = sched.prune_sparsity[next_prune];
      if (prune) prune(g, mlp_average_loss(a, result.block_loss), sparsity);
      lr *= sched.lr_decay;
      if (log)
        *log << "event=prune scale=" << scale << " epoch=" << epoch << " sparsity=" << sparsity << " lr=" << lr << "\n";
      ++next_prune;
    }
    for (int slot = 0; slot < slots; ++slot) {
#pragma omp parallel for schedule(dynamic, 1)
      for (int mlp = 0; mlp < a.m; ++mlp) {
        const auto& mem = a.members[static_cast<std::size_t>(mlp)];
        if (slot >= static_cast<int>(mem.size())) continue;
#ifdef _OPENMP
        const auto tid = static_cast<std::size_t>(omp_get_thread_num());
#else
        const std::size_t tid = 0;
#endif
        const int b = mem[static_cast<std::size_t>(slot)];
        const auto latent = g.latents.row(b);
        forward_one(g, mlp, coords, latent, caches[tid]);
        result.block_loss[static_cast<std::size_t>(b)] =
            backward_one(g, mlp, coords, latent, blocks[static_cast<std::size_t>(b)], caches[tid], grads[tid]);
        adam_update_mlp(g, mlp, grads[tid], lr, sched.adam);
        adam_update_latent(g, b, grads[tid].latent, lr, sched.adam);
      }
    }
    double mean = 0.0;
    for (double l : result.block_loss) mean += l;
    mean /= static_cast<double>(std::max<std::size_t>(1, result.block_loss.size()));
    if (!std::isfinite(mean)) throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(mean);
    if (log && log_every > 0 && (epoch % log_every == 0 || epoch + 1 == sched.epochs))
      *log << "event=epoch scale=" << scale << " epoch=" << epoch << " loss=" << mean << "\n";
  }
  result.mlp_loss = mlp_average_loss(a, result.block_loss);
  return result;
}

/// Decodes every effective block of a scale; returns one voxel vector per block.
template <typename Scalar>
std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> infer_blocks(
    const MlpGroup<Scalar>& g, const Assignment& a, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords) {
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> out(static_cast<std::size_t>(a.block_count()));
#pragma omp parallel
  {
    ForwardCache<Scalar> cache;
#pragma omp for schedule(dynamic, 4)
    for (int b = 0; b < a.block_count(); ++b) {
      forward_one(g, a.cluster_of[static_cast<std::size_t>(b)], coords, g.latents.row(b), cache);
      out[static_cast<std::size_t>(b)] = cache.output;
    }
  }
  return out;
}

}  // namespace ecnr
