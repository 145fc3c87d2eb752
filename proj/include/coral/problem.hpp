#pragma once

#include <concepts>
#include <optional>
#include <span>

#include "coral/geometry.hpp"

namespace coral {

/// A geometric fitting problem over a fixed set of data points.
///
///   fit(indices)        minimal or least-squares estimate, nullopt when degenerate
///   cost(model, i)      finite non-negative data cost of point i under model
///   distance(a, b)      parameter-space distance used to order merge candidates
template <typename P>
concept FittingProblem = requires(const P& p, std::span<const Index> idx, const typename P::Model& m, Index i) {
  typename P::Model;
  { p.size() } -> std::convertible_to<Index>;
  { p.minimal_sample_size() } -> std::convertible_to<Index>;
  { p.fit(idx) } -> std::same_as<std::optional<typename P::Model>>;
  { p.cost(m, i) } -> std::convertible_to<double>;
  { p.distance(m, m) } -> std::convertible_to<double>;
};

/// Problems whose points have an image position (enables local sampling).
template <typename P>
concept Positioned = requires(const P& p, Index i) {
  { p.position(i) } -> std::convertible_to<Vec2<double>>;
};

/// Problems where some points can only ever be outliers.
template <typename P>
concept HasPinnedOutliers = requires(const P& p, Index i) {
  { p.pinned_outlier(i) } -> std::convertible_to<bool>;
};

}  // namespace coral
