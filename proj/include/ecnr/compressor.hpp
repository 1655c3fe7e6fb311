#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ecnr/siren.hpp"

namespace ecnr {

/// Location of one parameter inside an MlpGroup.
struct ParamRef {
  int layer = 0;
  bool bias = false;
  int mlp = 0;
  Eigen::Index offset = 0;  ///< column-major offset inside the MLP's slice
};

/// Pruning candidates in canonical order: by layer; weights before biases; by MLP id; by offset.
template <typename Scalar>
std::vector<ParamRef> candidate_params(const MlpGroup<Scalar>& g) {
  std::vector<ParamRef> out;
  for (int l = 0; l < g.layer_count(); ++l) {
    for (int kind = 0; kind < 2; ++kind) {
      const bool bias = kind == 1;
      if (bias ? !g.cfg.bias_candidate(l) : !g.cfg.weight_candidate(l)) continue;
      const auto& t = bias ? g.biases[l] : g.weights[l];
      for (int m = 0; m < g.cfg.m; ++m)
        for (Eigen::Index o = 0; o < t.slice_size(); ++o) out.push_back({l, bias, m, o});
    }
  }
  return out;
}

template <typename Scalar>
Scalar& param_at(MlpGroup<Scalar>& g, const ParamRef& p) {
  auto& t = p.bias ? g.biases[p.layer] : g.weights[p.layer];
  return t.flat()[p.mlp * t.slice_size() + p.offset];
}
template <typename Scalar>
Scalar param_at(const MlpGroup<Scalar>& g, const ParamRef& p) {
  const auto& t = p.bias ? g.biases[p.layer] : g.weights[p.layer];
  return t.flat()[p.mlp * t.slice_size() + p.offset];
}
template <typename Scalar>
bool is_kept(const MlpGroup<Scalar>& g, const ParamRef& p) {
  const auto& t = p.bias ? g.bias_mask[p.layer] : g.weight_mask[p.layer];
  return t.flat()[p.mlp * t.slice_size() + p.offset] != Scalar(0);
}

/// Fraction of pruning candidates currently masked.
template <typename Scalar>
double candidate_sparsity(const MlpGroup<Scalar>& g) {
  const auto cands = candidate_params(g);
  if (cands.empty()) return 0.0;
  std::size_t pruned = 0;
  for (const auto& p : cands) pruned += is_kept(g, p) ? 0 : 1;
  return static_cast<double>(pruned) / static_cast<double>(cands.size());
}

/// Min-max normalization; a constant input maps to all zeros.
std::vector<double> minmax_normalize(std::span<const double> v);

/// Block-guided importance N(|p|) + lambda_b * N(L_b(mlp(p))) for every candidate, canonical order.
/// |p| is normalized over all candidates of the scale, L_b over the MLPs of the scale.
template <typename Scalar>
std::vector<double> importance(const MlpGroup<Scalar>& g, std::span<const double> mlp_loss, double lambda_b) {
  if (static_cast<int>(mlp_loss.size()) != g.cfg.m) throw Error("one block loss per MLP is required");
  const auto cands = candidate_params(g);
  std::vector<double> mag(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) mag[i] = std::abs(static_cast<double>(param_at(g, cands[i])));
  const auto nmag = minmax_normalize(mag);
  const auto nloss = minmax_normalize(mlp_loss);
  std::vector<double> score(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i)
    score[i] = nmag[i] + lambda_b * nloss[static_cast<std::size_t>(cands[i].mlp)];
  return score;
}

/// Masks the lowest-scoring candidates until ceil(target * |candidates|) are pruned.
/// Masks only grow; ties are broken by canonical order.
template <typename Scalar>
void prune_to_sparsity(MlpGroup<Scalar>& g, std::span<const double> scores, double target) {
  const auto cands = candidate_params(g);
  if (scores.size() != cands.size()) throw Error("score count does not match candidate count");
  if (target < 0.0 || target > 1.0) throw ConfigError("target sparsity must lie in [0, 1]");
  const auto want = static_cast<std::size_t>(std::ceil(target * static_cast<double>(cands.size()) - 1e-9));
  std::vector<std::size_t> open;
  std::size_t pruned = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (is_kept(g, cands[i]))
      open.push_back(i);
    else
      ++pruned;
  }
  if (want < pruned)
    throw ConfigError("target sparsity " + std::to_string(target) + " is below the current sparsity " +
                      std::to_string(static_cast<double>(pruned) / static_cast<double>(cands.size())));
  const std::size_t more = want - pruned;
  std::stable_sort(open.begin(), open.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  for (std::size_t k = 0; k < more; ++k) {
    const ParamRef& p = cands[open[k]];
    auto& mask = p.bias ? g.bias_mask[p.layer] : g.weight_mask[p.layer];
    auto& m1 = p.bias ? g.bias_m[p.layer] : g.weight_m[p.layer];
    auto& m2 = p.bias ? g.bias_v[p.layer] : g.weight_v[p.layer];
    const Eigen::Index flat = p.mlp * mask.slice_size() + p.offset;
    mask.flat()[flat] = Scalar(0);
    m1.flat()[flat] = Scalar(0);
    m2.flat()[flat] = Scalar(0);
    param_at(g, p) = Scalar(0);
  }
}

/// One-dimensional k-means with quantile seeding over the distinct values.
struct KMeans1D {
  std::vector<double> centroids;        ///< ascending
  std::vector<std::uint32_t> labels;    ///< per input value
  std::vector<double> radius;           ///< max |value - centroid| per cluster
};

/// Clusters `values` into min(k, distinct count) groups. With k >= distinct count every
/// distinct value becomes its own centroid.
KMeans1D kmeans_1d(std::span<const double> values, int k, int max_iters = 25);

/// Index of the nearest entry of an ascending codebook; ties go to the lower index.
template <typename Scalar>
std::uint32_t nearest_code(const std::vector<Scalar>& codebook, Scalar v) {
  auto it = std::lower_bound(codebook.begin(), codebook.end(), v);
  if (it == codebook.end()) return static_cast<std::uint32_t>(codebook.size() - 1);
  if (it == codebook.begin()) return 0;
  const auto hi = static_cast<std::uint32_t>(it - codebook.begin());
  return (v - *(it - 1) <= *it - v) ? hi - 1 : hi;
}

/// Shared parameters of one (layer, kind) across all MLPs of a scale.
template <typename Scalar>
struct Codebook {
  std::vector<Scalar> values;           ///< ascending
  std::vector<std::uint32_t> indices;   ///< one per kept parameter, canonical order
  double max_radius = 0.0;
  bool operator==(const Codebook&) const = default;
};

template <typename Scalar>
struct QuantizedScale {
  int bits = 8;
  std::vector<Codebook<Scalar>> weights;  ///< per layer
  std::vector<Codebook<Scalar>> biases;   ///< per layer
  bool operator==(const QuantizedScale&) const = default;

  Codebook<Scalar>& at(int layer, bool bias) { return bias ? biases[layer] : weights[layer]; }
  const Codebook<Scalar>& at(int layer, bool bias) const { return bias ? biases[layer] : weights[layer]; }
};

/// Calls f(mlp, flat offset into the layer tensor) for every kept parameter of one (layer, kind)
/// in canonical order (MLP id, then offset).
template <typename Scalar, typename F>
void for_each_kept(const MlpGroup<Scalar>& g, int layer, bool bias, F&& f) {
  const auto& mask = bias ? g.bias_mask[layer] : g.weight_mask[layer];
  const Eigen::Index ss = mask.slice_size();
  for (int m = 0; m < g.cfg.m; ++m)
    for (Eigen::Index o = 0; o < ss; ++o)
      if (mask.flat()[m * ss + o] != Scalar(0)) f(m, m * ss + o);
}

/// Replaces kept parameters by their codebook values.
template <typename Scalar>
void dequantize(MlpGroup<Scalar>& g, const QuantizedScale<Scalar>& q) {
  for (int l = 0; l < g.layer_count(); ++l)
    for (int kind = 0; kind < 2; ++kind) {
      const bool bias = kind == 1;
      const auto& cb = q.at(l, bias);
      auto& t = bias ? g.biases[l] : g.weights[l];
      std::size_t k = 0;
      for_each_kept(g, l, bias, [&](int, Eigen::Index flat) {
        if (k >= cb.indices.size()) throw FormatError("fewer quantization indices than kept parameters");
        const auto idx = cb.indices[k++];
        if (idx >= cb.values.size()) throw FormatError("quantization index exceeds codebook size");
        t.flat()[flat] = cb.values[idx];
      });
      if (k != cb.indices.size()) throw FormatError("more quantization indices than kept parameters");
    }
}

/// Global quantization: per layer and per kind, one k-means codebook of at most 2^bits entries
/// shared by all MLPs of the scale. Kept parameters are replaced by their codebook entry.
template <typename Scalar>
QuantizedScale<Scalar> quantize_global(MlpGroup<Scalar>& g, int bits) {
  if (bits < 1 || bits > 16) throw ConfigError("quantization bits must lie in [1, 16]");
  QuantizedScale<Scalar> q;
  q.bits = bits;
  q.weights.resize(static_cast<std::size_t>(g.layer_count()));
  q.biases.resize(static_cast<std::size_t>(g.layer_count()));
  for (int l = 0; l < g.layer_count(); ++l)
    for (int kind = 0; kind < 2; ++kind) {
      const bool bias = kind == 1;
      auto& t = bias ? g.biases[l] : g.weights[l];
      std::vector<Eigen::Index> where;
      std::vector<double> values;
      for_each_kept(g, l, bias, [&](int, Eigen::Index flat) {
        where.push_back(flat);
        values.push_back(static_cast<double>(t.flat()[flat]));
      });
      auto& cb = q.at(l, bias);
      if (values.empty()) continue;
      const KMeans1D km = kmeans_1d(values, 1 << bits);
      for (double c : km.centroids) cb.values.push_back(static_cast<Scalar>(c));
      cb.values.erase(std::unique(cb.values.begin(), cb.values.end()), cb.values.end());
      cb.indices.reserve(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto idx = nearest_code(cb.values, static_cast<Scalar>(values[i]));
        cb.indices.push_back(idx);
        cb.max_radius = std::max(cb.max_radius, std::abs(values[i] - static_cast<double>(cb.values[idx])));
      }
    }
  dequantize(g, q);
  return q;
}

/// Gradient of the summed block MSE with respect to each codebook entry: the sum of the
/// gradients of all parameters tied to it.
template <typename Scalar>
struct CodebookGrad {
  std::vector<std::vector<double>> weights, biases;
  double loss = 0.0;
};

/// Accumulates per-MLP parameter gradients into codebook gradients in canonical order.
template <typename Scalar>
void accumulate_codebook_grad(const MlpGroup<Scalar>& g, const QuantizedScale<Scalar>& q,
                              const std::vector<MlpGrad<Scalar>>& per_mlp, const std::vector<char>& active,
                              CodebookGrad<Scalar>& out) {
  out.weights.resize(static_cast<std::size_t>(g.layer_count()));
  out.biases.resize(static_cast<std::size_t>(g.layer_count()));
  for (int l = 0; l < g.layer_count(); ++l)
    for (int kind = 0; kind < 2; ++kind) {
      const bool bias = kind == 1;
      const auto& cb = q.at(l, bias);
      auto& acc = bias ? out.biases[l] : out.weights[l];
      acc.assign(cb.values.size(), 0.0);
      const Eigen::Index ss = (bias ? g.biases[l] : g.weights[l]).slice_size();
      std::size_t k = 0;
      for_each_kept(g, l, bias, [&](int m, Eigen::Index flat) {
        const auto idx = cb.indices[k++];
        if (!active[static_cast<std::size_t>(m)]) return;
        const auto& gm = per_mlp[static_cast<std::size_t>(m)];
        const Eigen::Index o = flat - m * ss;
        acc[idx] += static_cast<double>(bias ? gm.biases[l](o) : gm.weights[l](o));
      });
    }
}

/// Codebook gradient of the loss summed over (mlp_ids[i], block_ids[i]) pairs.
template <typename Scalar>
CodebookGrad<Scalar> codebook_gradient(const MlpGroup<Scalar>& g, const QuantizedScale<Scalar>& q,
                                       std::span<const int> mlp_ids, std::span<const int> block_ids,
                                       const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& blocks,
                                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords) {
  CodebookGrad<Scalar> total;
  for (std::size_t i = 0; i < mlp_ids.size(); ++i) {
    std::vector<MlpGrad<Scalar>> per(static_cast<std::size_t>(g.cfg.m));
    std::vector<char> active(static_cast<std::size_t>(g.cfg.m), 0);
    ForwardCache<Scalar> cache;
    const int m = mlp_ids[i], b = block_ids[i];
    forward_one(g, m, coords, g.latents.row(b), cache);
    total.loss += backward_one(g, m, coords, g.latents.row(b), blocks[static_cast<std::size_t>(b)], cache,
                               per[static_cast<std::size_t>(m)]);
    active[static_cast<std::size_t>(m)] = 1;
    CodebookGrad<Scalar> part;
    accumulate_codebook_grad(g, q, per, active, part);
    if (total.weights.empty()) {
      total.weights = part.weights;
      total.biases = part.biases;
    } else {
      for (std::size_t l = 0; l < part.weights.size(); ++l) {
        for (std::size_t j = 0; j < part.weights[l].size(); ++j) total.weights[l][j] += part.weights[l][j];
        for (std::size_t j = 0; j < part.biases[l].size(); ++j) total.biases[l][j] += part.biases[l][j];
      }
    }
  }
  return total;
}

/// Fine-tunes the shared codebook values with Adam while indices, masks and latent codes stay
/// frozen. Steps follow the training slot order. Returns the mean block loss per epoch.
template <typename Scalar>
std::vector<double> finetune_codebooks(MlpGroup<Scalar>& g, QuantizedScale<Scalar>& q, const Assignment& a,
                                       const std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& blocks,
                                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& coords, int epochs,
                                       double lr, const AdamConfig& adam = {}, std::ostream* log = nullptr,
                                       int scale = 0) {
  std::vector<double> history;
  if (epochs <= 0 || a.m == 0) return history;
  const int L = g.layer_count();
  std::vector<std::vector<double>> mw(static_cast<std::size_t>(2 * L)), vw(static_cast<std::size_t>(2 * L));
  for (int l = 0; l < L; ++l)
    for (int kind = 0; kind < 2; ++kind) {
      mw[static_cast<std::size_t>(2 * l + kind)].assign(q.at(l, kind == 1).values.size(), 0.0);
      vw[static_cast<std::size_t>(2 * l + kind)].assign(q.at(l, kind == 1).values.size(), 0.0);
    }
  std::vector<MlpGrad<Scalar>> per(static_cast<std::size_t>(a.m));
  std::vector<double> block_loss(blocks.size(), 0.0);
  std::vector<char> active(static_cast<std::size_t>(a.m), 0);
  const int slots = a.max_cluster_size();
  int step = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int slot = 0; slot < slots; ++slot) {
#pragma omp parallel
      {
        ForwardCache<Scalar> cache;
#pragma omp for schedule(dynamic, 1)
        for (int mlp = 0; mlp < a.m; ++mlp) {
          const auto& mem = a.members[static_cast<std::size_t>(mlp)];
          active[static_cast<std::size_t>(mlp)] = slot < static_cast<int>(mem.size());
          if (!active[static_cast<std::size_t>(mlp)]) continue;
          const int b = mem[static_cast<std::size_t>(slot)];
          forward_one(g, mlp, coords, g.latents.row(b), cache);
          block_loss[static_cast<std::size_t>(b)] = backward_one(g, mlp, coords, g.latents.row(b),
                                                                 blocks[static_cast<std::size_t>(b)], cache,
                                                                 per[static_cast<std::size_t>(mlp)]);
        }
      }
      CodebookGrad<Scalar> cg;
      accumulate_codebook_grad(g, q, per, active, cg);
      ++step;
      const double bc1 = 1.0 - std::pow(adam.beta1, step), bc2 = 1.0 - std::pow(adam.beta2, step);
      for (int l = 0; l < L; ++l)
        for (int kind = 0; kind < 2; ++kind) {
          auto& values = q.at(l, kind == 1).values;
          const auto& grad = kind == 1 ? cg.biases[l] : cg.weights[l];
          auto& m1 = mw[static_cast<std::size_t>(2 * l + kind)];
          auto& m2 = vw[static_cast<std::size_t>(2 * l + kind)];
          for (std::size_t j = 0; j < values.size(); ++j) {
            m1[j] = adam.beta1 * m1[j] + (1.0 - adam.beta1) * grad[j];
            m2[j] = adam.beta2 * m2[j] + (1.0 - adam.beta2) * grad[j] * grad[j];
            values[j] = static_cast<Scalar>(static_cast<double>(values[j]) -
                                            lr * (m1[j] / bc1) / (std::sqrt(m2[j] / bc2) + adam.eps));
          }
        }
      dequantize(g, q);
    }
    double mean = 0.0;
    for (double l : block_loss) mean += l;
    mean /= static_cast<double>(std::max<std::size_t>(1, block_loss.size()));
    if (!std::isfinite(mean)) throw DivergenceError("codebook fine-tuning diverged at epoch " + std::to_string(epoch));
    history.push_back(mean);
    if (log && (epoch % 25 == 0 || epoch + 1 == epochs))
      *log << "event=finetune scale=" << scale << " epoch=" << epoch << " loss=" << mean << "\n";
  }
  return history;
}

}  // namespace ecnr
