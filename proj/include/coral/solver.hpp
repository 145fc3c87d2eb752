#pragma once

// Relaxed multi-label solver: diagonal preconditioning, the preconditioned
// primal-dual iteration, thresholding and energy bookkeeping.
//
// Label fields are n x L row-major matrices, one row per point. By
// convention the last column is the outlier label, whose cost is the
// constant gamma.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "coral/neighborhood.hpp"

namespace coral {

using LabelField = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DualField = LabelField;
using Labels = std::vector<int>;

inline constexpr int kOutlier = -1;

struct SolverConfig {
  double lambda = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double theta = 1.0;
  int inner_iterations = 500;
  int max_outer = 20;
  /// Pairs farther apart than this (problem-defined parameter distance) are
  /// never merge candidates.
  double merge_tolerance = std::numeric_limits<double>::infinity();
  /// Outer loop stops when the energy improves by less than this fraction of
  /// the first recorded energy.
  double convergence_epsilon = 1e-4;
  /// Inner early exit: max per-entry change below stall_tolerance for
  /// stall_iterations consecutive iterations.
  double stall_tolerance = 1e-5;
  int stall_iterations = 10;
  bool enable_merging = true;
  /// Dissolve models whose removal lowers the hard-label energy.
  bool enable_pruning = true;
  std::uint64_t seed = 1;

  /// Throws coral::Error on out-of-range values.
  void validate() const;
};

/// Data costs for every point and label. The last column is the outlier.
struct CostMatrix {
  LabelField rho;

  /// Appends a constant gamma outlier column to per-model costs.
  static CostMatrix with_outlier(const LabelField& model_costs, double gamma);

  Index num_points() const { return rho.rows(); }
  Index num_labels() const { return rho.cols(); }
  Index num_models() const { return rho.cols() - 1; }
};

struct EnergyTerms {
  double data = 0;
  double smoothness = 0;
  double label = 0;

  double total() const { return data + smoothness + label; }
};

/// Per-element step sizes of the diagonally preconditioned iteration for
/// K = lambda * gradient: tau_e = 1 / sum_i |K_ei|, alpha_i = 1 / sum_e |K_ei|.
/// Zero rows or columns fall back to a step of 1.
struct StepSizes {
  Eigen::VectorXd tau;    // per edge
  Eigen::VectorXd alpha;  // per point
};

StepSizes precondition(const NeighborhoodGraph& graph, double lambda);

/// Uniform rows over `labels` columns.
LabelField uniform_field(Index points, Index labels);

/// One-hot field; kOutlier maps to the last column.
LabelField one_hot(std::span<const int> labels, Index num_labels);

struct PrimalDualOptions {
  /// Nonzero entries pin that row to the last (outlier) column.
  std::span<const std::uint8_t> pinned_outlier;
  bool record_gap = false;
};

struct PrimalDualResult {
  LabelField phi;
  int iterations = 0;
  /// Primal-dual gap after each iteration, when requested.
  std::vector<double> gap;
};

/// Alternating projected dual ascent / primal descent with over-relaxation.
/// The returned field is never worse, in relaxed energy, than `phi0`.
PrimalDualResult primal_dual_solve(const CostMatrix& cost, const NeighborhoodGraph& graph, PenaltyNorm norm,
                                   const SolverConfig& cfg, const LabelField& phi0,
                                   const PrimalDualOptions& options = {});

/// Relaxed energy (data + smoothness) with the label set fixed.
double relaxed_energy(const LabelField& phi, const CostMatrix& cost, const NeighborhoodGraph& graph,
                      PenaltyNorm norm, double lambda);

/// Argmax per row. Lowest model index wins ties; the outlier column only wins
/// when strictly greater than every model column.
Labels threshold_labels(const LabelField& phi);

/// Energy triple of a relaxed field. The label cost counts non-outlier
/// columns carrying any mass.
EnergyTerms total_energy(const LabelField& phi, const CostMatrix& cost, const NeighborhoodGraph& graph,
                         PenaltyNorm norm, const SolverConfig& cfg);

/// Energy triple of a hard labeling. The label cost counts distinct
/// non-outlier labels with at least one point.
EnergyTerms total_energy(std::span<const int> labels, const CostMatrix& cost, const NeighborhoodGraph& graph,
                         PenaltyNorm norm, const SolverConfig& cfg);

}  // namespace coral
