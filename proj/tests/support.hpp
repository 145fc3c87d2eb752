#pragma once

// Helpers shared by the unit and acceptance tests. Nothing here calls the
// library's energy code: the oracles recompute everything from the edges.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coral/coral.hpp"
#include "coral/neighborhood.hpp"

namespace coral::test {

/// A finite model class: model m is just an index into a fixed cost table.
/// fit() returns the table entry with the least summed cost on the sample.
class FixedModelProblem {
 public:
  using Model = int;

  explicit FixedModelProblem(Eigen::MatrixXd costs) : costs_(std::move(costs)) {}

  Index size() const { return costs_.rows(); }
  Index minimal_sample_size() const { return 1; }
  std::optional<Model> fit(std::span<const Index> idx) const {
    if (idx.empty()) return std::nullopt;
    int best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    for (Index m = 0; m < costs_.cols(); ++m) {
      double s = 0;
      for (Index i : idx) s += costs_(i, m);
      if (s < best_cost) {
        best_cost = s;
        best = int(m);
      }
    }
    return best;
  }
  double cost(const Model& m, Index i) const { return costs_(i, m); }
  double distance(const Model& a, const Model& b) const { return std::abs(double(a - b)); }

  const Eigen::MatrixXd& costs() const { return costs_; }

 private:
  Eigen::MatrixXd costs_;
};

/// Hard-label energy computed straight from the definition. `labels` hold
/// fixed-model ids (< costs.cols()) or kOutlier; the penalty is evaluated on
/// one-hot columns, one per label value including the outlier.
inline double oracle_energy(const std::vector<int>& labels, const Eigen::MatrixXd& costs, double gamma,
                            const NeighborhoodGraph& graph, PenaltyNorm norm, double lambda, double beta) {
  double data = 0;
  std::vector<bool> used(std::size_t(costs.cols()), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kOutlier) {
      data += gamma;
    } else {
      data += costs(Index(i), labels[i]);
      used[std::size_t(labels[i])] = true;
    }
  }
  double penalty = 0;
  for (int col = kOutlier; col < int(costs.cols()); ++col) {
    auto ind = [&](Index p) { return labels[std::size_t(p)] == col ? 1.0 : 0.0; };
    if (norm == PenaltyNorm::l11) {
      for (const Edge& e : graph.edges) penalty += std::abs(e.weight * (ind(e.dst) - ind(e.src)));
    } else {
      std::vector<double> sq(std::size_t(graph.num_points), 0.0);
      for (const Edge& e : graph.edges) sq[std::size_t(e.src)] += std::pow(e.weight * (ind(e.dst) - ind(e.src)), 2);
      for (double s : sq) penalty += std::sqrt(s);
    }
  }
  return data + lambda * penalty + beta * double(std::count(used.begin(), used.end(), true));
}

/// Minimum of oracle_energy over every labeling with values in
/// {kOutlier, 0, ..., models - 1}.
inline double exhaustive_optimum(const Eigen::MatrixXd& costs, double gamma, const NeighborhoodGraph& graph,
                                 PenaltyNorm norm, double lambda, double beta) {
  const Index n = costs.rows();
  const int base = int(costs.cols()) + 1;
  std::vector<int> digits(std::size_t(n), 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) labels[std::size_t(i)] = digits[std::size_t(i)] - 1;
    best = std::min(best, oracle_energy(labels, costs, gamma, graph, norm, lambda, beta));
    Index k = 0;
    while (k < n && ++digits[std::size_t(k)] == base) digits[std::size_t(k++)] = 0;
    if (k == n) break;
  }
  return best;
}

/// Maps fitted labels (indices into result.models) to fixed-model ids.
inline std::vector<int> fixed_ids(const FitResult<int>& r) {
  std::vector<int> out;
  for (int l : r.labels) out.push_back(l == kOutlier ? kOutlier : r.models[std::size_t(l)]);
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("coral_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace coral::test
