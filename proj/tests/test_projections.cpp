#include <doctest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "coral/projections.hpp"

using namespace coral;

namespace {

// Sort-based threshold: the largest k with u_k > (sum_{j<=k} u_j - 1) / k.
Eigen::VectorXd sorted_simplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0, theta = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / double(k + 1);
    if (u[k] > t) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0);
}

}  // namespace

TEST_CASE("simplex projection agrees with the sort-based threshold") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 3);
  for (int t = 0; t < 5000; ++t) {
    Eigen::VectorXd v(1 + t % 40);
    for (auto& x : v) x = g(rng);
    const Eigen::VectorXd p = project_simplex(v);
    CHECK((p - sorted_simplex(v)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("simplex projection fixes points already on the simplex") {
  Eigen::VectorXd v(4);
  v << 0.1, 0.2, 0.3, 0.4;
  CHECK((project_simplex(v) - v).norm() < 1e-15);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
  e(1) = 5;
  CHECK(project_simplex(e)(1) == 1.0);
}

TEST_CASE("row-wise projection equals per-vector projection") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 1);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(30, 6);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  auto copy = m;
  std::vector<double> scratch;
  project_rows_to_simplex(m, scratch);
  for (Index r = 0; r < m.rows(); ++r)
    CHECK((m.row(r).transpose() - project_simplex(copy.row(r).transpose())).norm() < 1e-14);
}

TEST_CASE("dual projections land in the unit ball and fix interior points") {
  Eigen::VectorXd psi(3);
  psi << 2, -0.5, -3;
  Eigen::VectorXd box = project_dual(psi, PenaltyNorm::l11);
  CHECK(box(0) == 1.0);
  CHECK(box(1) == -0.5);
  CHECK(box(2) == -1.0);
  Eigen::VectorXd ball = project_dual(psi, PenaltyNorm::l12);
  CHECK(ball.norm() == doctest::Approx(1.0));
  CHECK((ball.normalized() - psi.normalized()).norm() < 1e-15);
  Eigen::VectorXd small(2);
  small << 0.3, 0.4;
  CHECK(project_dual(small, PenaltyNorm::l12) == small);
}

TEST_CASE("field projection groups edges by source per label") {
  const auto g = build_grid4(2, 2);  // point 0 owns edges 0 and 1
  Eigen::MatrixXd psi(g.num_edges(), 2);
  psi.setConstant(0.1);
  psi.row(0) << 3, 0.1;
  psi.row(1) << 4, 0.1;
  project_dual_field(g, PenaltyNorm::l12, psi);
  CHECK(psi(0, 0) == doctest::Approx(0.6));
  CHECK(psi(1, 0) == doctest::Approx(0.8));
  CHECK(psi(0, 1) == doctest::Approx(0.1));  // its own column is inside the ball

  Eigen::MatrixXd box = Eigen::MatrixXd::Constant(g.num_edges(), 2, -7);
  project_dual_field(g, PenaltyNorm::l11, box);
  CHECK(box.minCoeff() == -1.0);
}
