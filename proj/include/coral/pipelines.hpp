#pragma once

// Two-view multi-homography segmentation and RGB-D plane extraction.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "coral/coral.hpp"
#include "coral/geometry.hpp"
#include "coral/neighborhood.hpp"
#include "coral/proposals.hpp"
#include "coral/solver.hpp"

namespace coral {

using CorrespondenceSet = std::vector<Correspondence<double>>;

/// Costs above this are clamped so the cost matrix stays finite.
inline constexpr double kMaxCost = 1e9;

/// Sparse correspondences with the symmetric Mahalanobis transfer cost.
class HomographyProblem {
 public:
  using Model = Homography<double>;

  HomographyProblem(std::span<const Correspondence<double>> matches, double sigma_pixel);

  Index size() const { return Index(matches_.size()); }
  Index minimal_sample_size() const { return 4; }
  std::optional<Model> fit(std::span<const Index> idx) const;
  double cost(const Model& h, Index i) const;
  double distance(const Model& a, const Model& b) const { return frobenius_distance(a, b); }
  Vec2<double> position(Index i) const { return matches_[std::size_t(i)].u1; }

 private:
  std::vector<Correspondence<double>> matches_;
  double sigma_pixel_;
};

/// Dense inverse-depth grid with the squared Mahalanobis plane residual.
/// Pixels without valid depth are pinned to the outlier label.
class PlaneProblem {
 public:
  using Model = InverseDepthPlane<double>;

  /// `inverse_depth` is row-major width x height; 0 or non-finite is invalid.
  PlaneProblem(std::span<const double> inverse_depth, Index width, Index height, double sigma_xi, double gamma);

  Index size() const { return width_ * height_; }
  Index minimal_sample_size() const { return 3; }
  std::optional<Model> fit(std::span<const Index> idx) const;
  double cost(const Model& plane, Index i) const;
  /// Distance of (w * diagonal, c) parameter vectors, in 1/m.
  double distance(const Model& a, const Model& b) const;
  Vec2<double> position(Index i) const { return {double(i % width_), double(i / width_)}; }
  bool pinned_outlier(Index i) const { return !valid_[std::size_t(i)]; }

  Index width() const { return width_; }
  Index height() const { return height_; }
  double diagonal() const { return diagonal_; }

 private:
  std::vector<double> xi_;
  std::vector<bool> valid_;
  Index width_;
  Index height_;
  double sigma_xi_;
  double gamma_;
  double diagonal_;
};

struct HomographyTask {
  CorrespondenceSet correspondences;
  double sigma_pixel = 1.0;
  Index k = 4;
  double lambda = 0.5;
  double beta = 100.0;
  double gamma = 20.0;
  int proposals = 100;
  int inner_iterations = 500;
  int max_outer = 20;
  std::uint64_t seed = 1;
  /// Proposal sampling radius in view-1 pixels; unset samples globally.
  std::optional<double> local_radius = 100.0;
  /// Sequential RANSAC baseline parameters (used by run_homography_ransac).
  RansacConfig ransac{500, 9.0, 10, 3, 1};

  SolverConfig solver_config() const;
};

struct PlaneTask {
  /// Row-major inverse depth (1/m), 0 = invalid.
  std::vector<double> inverse_depth;
  /// Row-major intensity normalized to [0, 1].
  std::vector<double> intensity;
  Index width = 0;
  Index height = 0;
  /// 0.02 m depth noise at 2 m: 0.02 / 2^2.
  double sigma_xi = 0.005;
  double edge_alpha = 10.0;
  double lambda = 1.0;
  double beta = 5000.0;
  double gamma = 9.0;
  int proposals = 200;
  int inner_iterations = 500;
  int max_outer = 20;
  std::uint64_t seed = 1;
  std::optional<double> local_radius = 10.0;
  RansacConfig ransac{500, 9.0, 500, 3, 1};

  SolverConfig solver_config() const;
};

/// Per grid4 edge (same order as build_grid4): exp(-edge_alpha * |I(dst) - I(src)|)
/// with I already in [0, 1].
std::vector<double> edge_weights(std::span<const double> intensity, Index width, Index height, double edge_alpha);

/// kNN graph on view-1 positions, L1,1 penalty, CORAL outer loop. The
/// correspondences are processed in a canonical (coordinate-sorted) order, so
/// the output does not depend on input order.
FitResult<Homography<double>> run_homography_segmentation(const HomographyTask& task);

/// Sequential RANSAC on the same cost as run_homography_segmentation.
FitResult<Homography<double>> run_homography_ransac(const HomographyTask& task);

/// Grid graph with intensity edge weights, L1,2 penalty, CORAL outer loop.
/// Labels are per pixel, row-major. Throws AllDepthInvalid.
FitResult<InverseDepthPlane<double>> run_plane_segmentation(const PlaneTask& task);

FitResult<InverseDepthPlane<double>> run_plane_ransac(const PlaneTask& task);

}  // namespace coral
