#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "coral/solver.hpp"

namespace coral {

/// Optimal assignment maximizing the total score of a rows x cols matrix.
/// Returns, for every row, the matched column or -1 when rows > cols.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& score);

/// Fraction of points whose label disagrees with the ground truth after the
/// best one-to-one matching of predicted models to ground-truth models.
/// The outlier label only ever matches the outlier label.
double misclassification_error(std::span<const int> predicted, std::span<const int> truth);

}  // namespace coral
