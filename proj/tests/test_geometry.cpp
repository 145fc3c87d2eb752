#include <doctest.h>

#include <random>
#include <vector>

#include "coral/errors.hpp"
#include "coral/geometry.hpp"
#include "coral/simworld.hpp"

using namespace coral;

namespace {

Mat3<double> random_homography(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat3<double> h;
  h << 1 + 0.2 * u(rng), 0.1 * u(rng), 30 * u(rng), 0.1 * u(rng), 1 + 0.2 * u(rng), 30 * u(rng), 1e-4 * u(rng),
      1e-4 * u(rng), 1;
  return h;
}

std::vector<Correspondence<double>> matches_under(const Mat3<double>& h, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(0, 640), y(0, 480);
  std::vector<Correspondence<double>> out;
  for (int i = 0; i < n; ++i) {
    const Vec2<double> a(x(rng), y(rng));
    out.push_back({a, (h * a.homogeneous()).hnormalized(), i});
  }
  return out;
}

}  // namespace

TEST_CASE("canonical form is invariant to scale and sign") {
  std::mt19937_64 rng(1);
  const Mat3<double> h = random_homography(rng);
  const Mat3<double> a = canonicalize<double>(h);
  CHECK((canonicalize<double>(-3.7 * h) - a).norm() < 1e-14);
  CHECK(a.norm() == doctest::Approx(1.0));
  CHECK(a(2, 2) > 0);
  CHECK_THROWS_AS(canonicalize<double>(Mat3<double>::Zero()), NonInvertible);
}

TEST_CASE("DLT recovers an exact homography from minimal and larger sets") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Mat3<double> h = random_homography(rng);
    for (int n : {4, 25}) {
      const auto m = matches_under(h, n, rng);
      const Homography<double> est = estimate_homography_dlt<double>(m);
      CHECK((est.matrix() - canonicalize<double>(h)).norm() < 1e-8);
    }
  }
}

TEST_CASE("DLT rejects too few and collinear samples") {
  std::vector<Correspondence<double>> three(3);
  CHECK_THROWS_AS(estimate_homography_dlt<double>(three), TooFewPoints);
  std::vector<Correspondence<double>> line;
  for (int i = 0; i < 4; ++i) line.push_back({Vec2<double>(i, 2 * i), Vec2<double>(i, 2 * i + 1), i});
  CHECK_THROWS_AS(estimate_homography_dlt<double>(line), DegenerateSample);
}

TEST_CASE("projective Jacobian matches central differences") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const Mat3<double> h = random_homography(rng);
    const Vec2<double> u(300 + t, 200 - t);
    const Mat2<double> j = projective_jacobian<double>(h, u);
    const double eps = 1e-4;
    Mat2<double> fd;
    for (int k = 0; k < 2; ++k) {
      Vec2<double> d = Vec2<double>::Zero();
      d(k) = eps;
      fd.col(k) = ((h * (u + d).homogeneous()).hnormalized() - (h * (u - d).homogeneous()).hnormalized()) / (2 * eps);
    }
    CHECK((j - fd).norm() < 1e-6 * (1 + j.norm()));
  }
}

TEST_CASE("transfer cost is zero on exact matches and symmetric under view swap") {
  std::mt19937_64 rng(4);
  const Homography<double> h(random_homography(rng));
  auto m = matches_under(h.matrix(), 20, rng);
  for (auto& c : m) {
    const auto cov = propagate_covariance(c, h, 1.0);
    CHECK(symmetric_transfer_cost(c, h, cov) < 1e-12);
    c.u2 += Vec2<double>(1.5, -0.5);
    const double fwd = symmetric_transfer_cost(c, h, propagate_covariance(c, h, 1.0));
    const auto s = swapped(c);
    const double bwd = symmetric_transfer_cost(s, h.inverse(), propagate_covariance(s, h.inverse(), 1.0));
    CHECK(fwd > 0);
    CHECK(bwd == doctest::Approx(fwd).epsilon(1e-9));
  }
}

TEST_CASE("propagated covariance is the identity-plus-JJt form") {
  const Homography<double> id(Mat3<double>::Identity());
  const Correspondence<double> c{Vec2<double>(10, 20), Vec2<double>(10, 20), 0};
  const auto cov = propagate_covariance(c, id, 2.0);
  CHECK((cov.sigma21 - 8.0 * Mat2<double>::Identity()).norm() < 1e-12);
  CHECK((cov.sigma12 - 8.0 * Mat2<double>::Identity()).norm() < 1e-12);
  CHECK_THROWS_AS(propagate_covariance(c, id, 0.0), Error);
}

TEST_CASE("plane fit is exact on noiseless inverse depth and rejects degenerate input") {
  const InverseDepthPlane<double> truth{Vec2<double>(1e-3, -2e-3), 0.5};
  std::vector<DepthSample<double>> px;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) px.push_back({Vec2<double>(x, y), truth.predict(Vec2<double>(x, y))});
  const auto fit = fit_plane<double>(px);
  CHECK((fit.w - truth.w).norm() < 1e-12);
  CHECK(fit.c == doctest::Approx(truth.c).epsilon(1e-12));

  std::vector<DepthSample<double>> line;
  for (int x = 0; x < 5; ++x) line.push_back({Vec2<double>(x, x), 1.0});
  CHECK_THROWS_AS(fit_plane<double>(line), DegenerateSample);
  CHECK_THROWS_AS(fit_plane<double>(std::span(px).first(2)), DegenerateSample);
  CHECK_THROWS_AS(plane_cost<double>(Vec2<double>(0, 0), 0.0, truth, 0.01), InvalidDepth);
  CHECK(plane_cost<double>(Vec2<double>(0, 0), 0.52, truth, 0.01) == doctest::Approx(4.0));
}

TEST_CASE("closed-form plane agrees with the pinhole projection") {
  const Vec3<double> n = Vec3<double>(0.3, -0.2, 1.0).normalized();
  const double d = 2.0, f = 500, cx = 320, cy = 240;
  const auto plane = inverse_depth_plane(n, d, f, cx, cy);
  for (double u : {0.0, 100.0, 639.0})
    for (double v : {0.0, 240.0, 479.0}) {
      const Vec3<double> ray((u - cx) / f, (v - cy) / f, 1.0);
      const double z = d / n.dot(ray);
      CHECK(plane.predict(Vec2<double>(u, v)) == doctest::Approx(1.0 / z).epsilon(1e-12));
    }
}
