#include "coral/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace coral {

std::vector<int> max_weight_assignment(const Eigen::MatrixXd& score) {
  const Index rows = score.rows();
  const Index cols = score.cols();
  std::vector<int> out(std::size_t(rows), -1);
  if (rows == 0 || cols == 0) return out;

  // Square min-cost problem: cost = max - score, padded with zeros.
  const Index n = std::max(rows, cols);
  const double top = score.maxCoeff();
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(n, n);
  cost.topLeftCorner(rows, cols) = (top - score.array()).matrix();

  // Shortest augmenting path Hungarian method with potentials (1-based).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(std::size_t(n) + 1, 0.0), v(std::size_t(n) + 1, 0.0);
  std::vector<Index> p(std::size_t(n) + 1, 0), way(std::size_t(n) + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(std::size_t(n) + 1, inf);
    std::vector<bool> used(std::size_t(n) + 1, false);
    do {
      used[std::size_t(j0)] = true;
      const Index i0 = p[std::size_t(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(p[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[std::size_t(j0)] != 0);
    do {
      const Index j1 = way[std::size_t(j0)];
      p[std::size_t(j0)] = p[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  for (Index j = 1; j <= n; ++j) {
    const Index i = p[std::size_t(j)];
    if (i >= 1 && i <= rows && j <= cols) out[std::size_t(i - 1)] = int(j - 1);
  }
  return out;
}

double misclassification_error(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DimensionMismatch("label vectors differ in length");
  if (predicted.empty()) return 0.0;

  std::map<int, Index> pred_index, truth_index;
  for (int l : predicted)
    if (l != kOutlier) pred_index.emplace(l, 0);
  for (int l : truth)
    if (l != kOutlier) truth_index.emplace(l, 0);
  Index k = 0;
  for (auto& [l, idx] : pred_index) idx = k++;
  k = 0;
  for (auto& [l, idx] : truth_index) idx = k++;

  Eigen::MatrixXd agree = Eigen::MatrixXd::Zero(Index(pred_index.size()), Index(truth_index.size()));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == kOutlier || truth[i] == kOutlier) {
      if (predicted[i] == truth[i]) ++correct;
      continue;
    }
    agree(pred_index[predicted[i]], truth_index[truth[i]]) += 1.0;
  }
  const auto match = max_weight_assignment(agree);
  for (Index r = 0; r < agree.rows(); ++r)
    if (match[std::size_t(r)] >= 0) correct += std::size_t(agree(r, match[std::size_t(r)]));
  return double(predicted.size() - correct) / double(predicted.size());
}

}  // namespace coral
