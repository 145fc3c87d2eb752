#pragma once

// Weighted neighbourhood graphs and the discrete gradient operator over them.
//
// Edges are stored sorted by source point, so the outgoing edges of a point
// form a contiguous group [group_begin(i), group_end(i)). Groups are the unit
// of the isotropic (L1,2) penalty.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "coral/errors.hpp"
#include "coral/geometry.hpp"

namespace coral {

enum class GraphKind { grid4, knn };

struct Edge {
  Index src = 0;
  Index dst = 0;
  double weight = 1.0;
};

struct NeighborhoodGraph {
  GraphKind kind = GraphKind::knn;
  Index num_points = 0;
  std::vector<Edge> edges;
  std::vector<Index> group_offsets;  // size num_points + 1

  Index num_edges() const { return Index(edges.size()); }
  Index group_begin(Index point) const { return group_offsets[std::size_t(point)]; }
  Index group_end(Index point) const { return group_offsets[std::size_t(point) + 1]; }

  /// Rebuilds group_offsets; edges must already be sorted by source.
  void rebuild_groups();
};

/// Forward-difference lattice over a row-major width x height grid: for each
/// pixel, the edge to its right neighbour then the edge to the one below.
NeighborhoodGraph build_grid4(Index width, Index height);

/// Median distance to the k-th nearest neighbour candidates, used as the
/// default weight scale. Returns 1 when every distance is zero.
double median_knn_distance(std::span<const Vec2<double>> points, Index k);

/// Directed k-nearest-neighbour graph with weights exp(-d / scale). When no
/// scale is given, the median kNN distance is used. k is clamped to n - 1.
NeighborhoodGraph build_knn(std::span<const Vec2<double>> points, Index k, std::optional<double> scale = {});

/// Primal penalty; the dual norm is fixed by the choice.
///   l11: sum of absolute edge values, dual ball is the componentwise box.
///   l12: per source group Euclidean norm, dual ball is the group L2 ball.
enum class PenaltyNorm { l11, l12 };

/// Per-edge, per-label weighted differences w * (phi(dst) - phi(src)).
template <typename Derived>
Eigen::MatrixXd gradient(const NeighborhoodGraph& graph, const Eigen::MatrixBase<Derived>& phi) {
  if (phi.rows() != graph.num_points) throw DimensionMismatch("label field rows differ from graph point count");
  Eigen::MatrixXd g(graph.num_edges(), phi.cols());
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const Edge& edge = graph.edges[std::size_t(e)];
    g.row(e) = edge.weight * (phi.row(edge.dst) - phi.row(edge.src));
  }
  return g;
}

/// Algebraic adjoint of `gradient`: scatter-adds +w*psi at each edge's
/// destination and -w*psi at its source, in fixed edge order.
template <typename Derived>
Eigen::MatrixXd divergence(const NeighborhoodGraph& graph, const Eigen::MatrixBase<Derived>& psi) {
  if (psi.rows() != graph.num_edges()) throw DimensionMismatch("dual field rows differ from edge count");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(graph.num_points, psi.cols());
  for (Index e = 0; e < graph.num_edges(); ++e) {
    const Edge& edge = graph.edges[std::size_t(e)];
    out.row(edge.dst) += edge.weight * psi.row(e);
    out.row(edge.src) -= edge.weight * psi.row(e);
  }
  return out;
}

template <typename Derived>
double penalty_value(const NeighborhoodGraph& graph, PenaltyNorm norm, const Eigen::MatrixBase<Derived>& g) {
  if (g.rows() != graph.num_edges()) throw DimensionMismatch("gradient rows differ from edge count");
  if (norm == PenaltyNorm::l11) return g.cwiseAbs().sum();
  double total = 0;
  for (Index i = 0; i < graph.num_points; ++i) {
    const Index b = graph.group_begin(i);
    const Index len = graph.group_end(i) - b;
    if (len == 0) continue;
    total += g.middleRows(b, len).colwise().norm().sum();
  }
  return total;
}

}  // namespace coral
