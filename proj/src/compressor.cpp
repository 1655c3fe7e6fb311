#include "ecnr/compressor.hpp"

namespace ecnr {

std::vector<double> minmax_normalize(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  return out;
}

KMeans1D kmeans_1d(std::span<const double> values, int k, int max_iters) {
  KMeans1D out;
  if (values.empty()) return out;
  if (k < 1) throw Error("1-D k-means needs at least one cluster");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  const auto n = sorted.size();
  const auto d = distinct.size();
  auto& c = out.centroids;
  if (d <= static_cast<std::size_t>(k)) {
    c = distinct;
  } else {
    for (int j = 0; j < k; ++j)
      c.push_back(distinct[static_cast<std::size_t>((j + 0.5) * static_cast<double>(d) / k)]);
    // Lloyd iterations over the sorted values: cluster j owns a contiguous run.
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];
    std::vector<std::size_t> start(static_cast<std::size_t>(k) + 1);
    for (int iter = 0; iter < max_iters; ++iter) {
      start[0] = 0;
      start[static_cast<std::size_t>(k)] = n;
      for (int j = 1; j < k; ++j) {
        const double boundary = 0.5 * (c[static_cast<std::size_t>(j - 1)] + c[static_cast<std::size_t>(j)]);
        // values equal to the midpoint go to the lower cluster
        start[static_cast<std::size_t>(j)] =
            static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), boundary) - sorted.begin());
      }
      bool changed = false;
      for (int j = 0; j < k; ++j) {
        const auto a = start[static_cast<std::size_t>(j)], b = start[static_cast<std::size_t>(j) + 1];
        if (b <= a) continue;
        const double mean = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
        if (mean != c[static_cast<std::size_t>(j)]) changed = true;
        c[static_cast<std::size_t>(j)] = mean;
      }
      std::sort(c.begin(), c.end());
      if (!changed) break;
    }
  }
  out.radius.assign(c.size(), 0.0);
  out.labels.reserve(values.size());
  for (double v : values) {
    const auto idx = nearest_code(c, v);
    out.labels.push_back(idx);
    out.radius[idx] = std::max(out.radius[idx], std::abs(v - c[idx]));
  }
  return out;
}

}  // namespace ecnr
