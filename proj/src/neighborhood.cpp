#include "coral/neighborhood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace coral {

void NeighborhoodGraph::rebuild_groups() {
  group_offsets.assign(std::size_t(num_points) + 1, 0);
  for (const Edge& e : edges) ++group_offsets[std::size_t(e.src) + 1];
  std::partial_sum(group_offsets.begin(), group_offsets.end(), group_offsets.begin());
}

NeighborhoodGraph build_grid4(Index width, Index height) {
  if (width < 1 || height < 1) throw Error("grid dimensions must be positive");
  NeighborhoodGraph g;
  g.kind = GraphKind::grid4;
  g.num_points = width * height;
  g.edges.reserve(std::size_t(width * (height - 1) + height * (width - 1)));
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      const Index p = y * width + x;
      if (x + 1 < width) g.edges.push_back({p, p + 1, 1.0});
      if (y + 1 < height) g.edges.push_back({p, p + width, 1.0});
    }
  }
  g.rebuild_groups();
  return g;
}

namespace {

// Nearest neighbours of every point, ordered by (distance, index).
std::vector<std::vector<std::pair<double, Index>>> nearest(std::span<const Vec2<double>> points, Index k) {
  const auto n = Index(points.size());
  std::vector<std::vector<std::pair<double, Index>>> out(points.size());
  std::vector<std::pair<double, Index>> cand;
  cand.reserve(points.size());
  for (Index i = 0; i < n; ++i) {
    cand.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) cand.emplace_back((points[std::size_t(i)] - points[std::size_t(j)]).norm(), j);
    const auto kk = std::min<std::size_t>(std::size_t(k), cand.size());
    std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(kk), cand.end());
    out[std::size_t(i)].assign(cand.begin(), cand.begin() + std::ptrdiff_t(kk));
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

double median_knn_distance(std::span<const Vec2<double>> points, Index k) {
  std::vector<double> d;
  for (const auto& nb : nearest(points, k))
    for (const auto& [dist, j] : nb) d.push_back(dist);
  const double m = median_of(std::move(d));
  return m > 0.0 ? m : 1.0;
}

NeighborhoodGraph build_knn(std::span<const Vec2<double>> points, Index k, std::optional<double> scale) {
  if (k < 1) throw Error("k must be positive");
  const auto n = Index(points.size());
  NeighborhoodGraph g;
  g.kind = GraphKind::knn;
  g.num_points = n;
  const auto nb = nearest(points, std::min<Index>(k, std::max<Index>(n - 1, 0)));

  double s = 1.0;
  if (scale) {
    if (!(*scale > 0.0)) throw Error("kNN weight scale must be positive");
    s = *scale;
  } else {
    std::vector<double> d;
    for (const auto& list : nb)
      for (const auto& [dist, j] : list) d.push_back(dist);
    s = median_of(std::move(d));
    if (!(s > 0.0)) s = 1.0;
  }

  for (Index i = 0; i < n; ++i)
    for (const auto& [dist, j] : nb[std::size_t(i)]) g.edges.push_back({i, j, std::exp(-dist / s)});
  g.rebuild_groups();
  return g;
}

}  // namespace coral
