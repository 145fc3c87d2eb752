#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <vector>

#include "coral/neighborhood.hpp"

namespace coral {

namespace detail {

/// Threshold theta of the simplex projection max(v - theta, 0). Entries at or
/// below max(v) - 1 can never be active, so they are filtered first; the rest
/// is resolved by Michelot's fixed-point iteration, which only ever raises
/// theta and terminates once no candidate drops out.
template <typename Scalar, typename Get>
Scalar simplex_threshold(Index n, Get get, std::vector<Scalar>& cand) {
  Scalar top = get(0);
  for (Index i = 1; i < n; ++i) top = std::max(top, get(i));
  cand.resize(std::size_t(n));
  std::size_t count = 0;
  Scalar sum = 0;
  for (Index i = 0; i < n; ++i) {
    const Scalar x = get(i);
    if (x > top - Scalar(1)) {
      cand[count++] = x;
      sum += x;
    }
  }
  Scalar theta = (sum - Scalar(1)) / Scalar(count);
  while (true) {
    std::size_t kept = 0;
    sum = 0;
    for (std::size_t j = 0; j < count; ++j) {
      const Scalar x = cand[j];
      if (x > theta) {
        cand[kept++] = x;
        sum += x;
      }
    }
    if (kept == count) return theta;
    count = kept;
    theta = (sum - Scalar(1)) / Scalar(kept);
  }
}

}  // namespace detail

/// Euclidean projection onto the probability simplex {x >= 0, sum x = 1}.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_simplex(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Index n = v.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n);
  if (n == 0) return out;
  std::vector<Scalar> cand;
  const Scalar theta = detail::simplex_threshold<Scalar>(n, [&](Index i) { return Scalar(v(i)); }, cand);
  for (Index i = 0; i < n; ++i) out(i) = std::max(v(i) - theta, Scalar(0));
  return out;
}

/// In-place simplex projection of every row. `scratch` avoids reallocation.
template <typename Derived>
void project_rows_to_simplex(Eigen::MatrixBase<Derived>& m, std::vector<typename Derived::Scalar>& scratch) {
  using Scalar = typename Derived::Scalar;
  const Index cols = m.cols();
  if (cols == 0) return;
  scratch.reserve(std::size_t(cols));
  for (Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const Scalar theta = detail::simplex_threshold<Scalar>(cols, [&](Index c) { return Scalar(row(c)); }, scratch);
    row = (row.array() - theta).cwiseMax(Scalar(0)).matrix();
  }
}

/// Projection of one dual group onto the unit ball of the dual norm:
/// componentwise clamp to [-1, 1] for l11, radial scaling psi / max(1, |psi|_2)
/// for l12.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_dual(const Eigen::MatrixBase<Derived>& psi,
                                                                        PenaltyNorm norm) {
  using Scalar = typename Derived::Scalar;
  if (norm == PenaltyNorm::l11) return psi.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
  const Scalar len = psi.norm();
  return psi / std::max(Scalar(1), len);
}

/// Projects a full |edges| x L dual field in place, grouping by source point
/// for l12.
template <typename Derived>
void project_dual_field(const NeighborhoodGraph& graph, PenaltyNorm norm, Eigen::MatrixBase<Derived>& psi) {
  using Scalar = typename Derived::Scalar;
  if (norm == PenaltyNorm::l11) {
    psi = psi.cwiseMax(Scalar(-1)).cwiseMin(Scalar(1));
    return;
  }
  using Row = Eigen::Array<Scalar, 1, Eigen::Dynamic>;
  Row sq(psi.cols());
  for (Index i = 0; i < graph.num_points; ++i) {
    const Index b = graph.group_begin(i);
    const Index len = graph.group_end(i) - b;
    if (len == 0) continue;
    sq = psi.row(b).array().square();
    for (Index e = b + 1; e < b + len; ++e) sq += psi.row(e).array().square();
    if ((sq <= Scalar(1)).all()) continue;
    sq = (sq > Scalar(1)).select(sq.rsqrt(), Row::Ones(psi.cols()));
    for (Index e = b; e < b + len; ++e) psi.row(e).array() *= sq;
  }
}

}  // namespace coral
