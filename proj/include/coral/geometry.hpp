#pragma once

// Geometric models used by the fitting pipelines: planar homographies between
// two views and inverse-depth planes over a pixel grid.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "coral/errors.hpp"

namespace coral {

using Index = Eigen::Index;

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

/// A pixel match between view 1 and view 2.
template <typename Scalar = double>
struct Correspondence {
  Vec2<Scalar> u1 = Vec2<Scalar>::Zero();
  Vec2<Scalar> u2 = Vec2<Scalar>::Zero();
  Index id = 0;
};

template <typename Scalar>
Correspondence<Scalar> swapped(const Correspondence<Scalar>& c) {
  return {c.u2, c.u1, c.id};
}

/// Rescales `h` to unit Frobenius norm with a positive last nonzero entry
/// (row-major scan), so homographies equal up to scale compare equal.
template <typename Scalar>
Mat3<Scalar> canonicalize(const Mat3<Scalar>& h) {
  const Scalar norm = h.norm();
  if (!(norm > Scalar(0)) || !std::isfinite(double(norm))) throw NonInvertible("homography has zero or non-finite norm");
  Mat3<Scalar> out = h / norm;
  const Scalar eps = Scalar(1e-12);
  for (int k = 8; k >= 0; --k) {
    const Scalar v = out(k / 3, k % 3);
    if (std::abs(v) > eps) {
      if (v < Scalar(0)) out = -out;
      break;
    }
  }
  return out;
}

/// Homography mapping view-1 homogeneous pixels to view 2. Always stored in
/// canonical scale.
template <typename Scalar = double>
class Homography {
 public:
  Homography() : h_(Mat3<Scalar>::Identity() / std::sqrt(Scalar(3))) {}

  /// Throws NonInvertible when `h` is singular after normalization.
  explicit Homography(const Mat3<Scalar>& h) : h_(canonicalize(h)) {
    if (std::abs(h_.determinant()) < Scalar(1e-9)) throw NonInvertible("homography is singular");
  }

  const Mat3<Scalar>& matrix() const { return h_; }

  Homography inverse() const { return Homography(h_.inverse()); }

  /// Projective map x -> dehomogenize(H x). Returns nullopt at infinity.
  std::optional<Vec2<Scalar>> apply(const Vec2<Scalar>& u) const { return transfer(h_, u); }

  static std::optional<Vec2<Scalar>> transfer(const Mat3<Scalar>& h, const Vec2<Scalar>& u) {
    const Vec3<Scalar> x = h * u.homogeneous();
    if (std::abs(x.z()) < Scalar(1e-14) * x.template head<2>().norm() || x.z() == Scalar(0)) return std::nullopt;
    return x.hnormalized();
  }

  friend bool operator==(const Homography& a, const Homography& b) { return a.h_ == b.h_; }

 private:
  Mat3<Scalar> h_;
};

template <typename Scalar>
Scalar frobenius_distance(const Homography<Scalar>& a, const Homography<Scalar>& b) {
  return (a.matrix() - b.matrix()).norm();
}

/// Propagated reprojection covariances. `sigma12` belongs to the view-1
/// residual (u1 against H12 u2), `sigma21` to the view-2 residual.
template <typename Scalar = double>
struct CovariancePair {
  Mat2<Scalar> sigma12 = Mat2<Scalar>::Identity();
  Mat2<Scalar> sigma21 = Mat2<Scalar>::Identity();

  CovariancePair swapped() const { return {sigma21, sigma12}; }
};

/// Jacobian of x -> dehomogenize(H [x;1]) with respect to x.
template <typename Scalar>
Mat2<Scalar> projective_jacobian(const Mat3<Scalar>& h, const Vec2<Scalar>& u) {
  const Vec3<Scalar> x = h * u.homogeneous();
  if (x.z() == Scalar(0)) throw NonInvertible("point maps to infinity");
  const Scalar inv_w = Scalar(1) / x.z();
  const Scalar px = x.x() * inv_w;
  const Scalar py = x.y() * inv_w;
  Mat2<Scalar> j;
  j << h(0, 0) - px * h(2, 0), h(0, 1) - px * h(2, 1),
       h(1, 0) - py * h(2, 0), h(1, 1) - py * h(2, 1);
  return j * inv_w;
}

/// First-order propagation: Sigma_ab = J Sigma0 J^T + Sigma0 with
/// Sigma0 = sigma_pixel^2 I, J taken at the source pixel of each mapping.
template <typename Scalar>
CovariancePair<Scalar> propagate_covariance(const Correspondence<Scalar>& c, const Homography<Scalar>& h21,
                                            Scalar sigma_pixel) {
  if (!(sigma_pixel > Scalar(0))) throw Error("sigma_pixel must be positive");
  const Scalar var = sigma_pixel * sigma_pixel;
  const Mat3<Scalar> h12 = h21.matrix().inverse();
  const Mat2<Scalar> j21 = projective_jacobian<Scalar>(h21.matrix(), c.u1);
  const Mat2<Scalar> j12 = projective_jacobian<Scalar>(h12, c.u2);
  CovariancePair<Scalar> out;
  out.sigma21 = var * (j21 * j21.transpose() + Mat2<Scalar>::Identity());
  out.sigma12 = var * (j12 * j12.transpose() + Mat2<Scalar>::Identity());
  return out;
}

/// Half the sum of the two Mahalanobis reprojection errors:
/// 1/2 (r1^T Sigma12^-1 r1 + r2^T Sigma21^-1 r2), r1 = u1 - H12 u2, r2 = u2 - H21 u1.
template <typename Scalar>
Scalar symmetric_transfer_cost(const Correspondence<Scalar>& c, const Homography<Scalar>& h21,
                               const CovariancePair<Scalar>& cov) {
  const Mat3<Scalar> h12 = h21.matrix().inverse();
  if (!h12.allFinite()) throw NonInvertible("homography cannot be inverted");
  const auto to2 = Homography<Scalar>::transfer(h21.matrix(), c.u1);
  const auto to1 = Homography<Scalar>::transfer(h12, c.u2);
  if (!to2 || !to1) throw NonInvertible("point maps to infinity");
  const Vec2<Scalar> r2 = c.u2 - *to2;
  const Vec2<Scalar> r1 = c.u1 - *to1;
  const Scalar d21 = r2.dot(cov.sigma21.ldlt().solve(r2));
  const Scalar d12 = r1.dot(cov.sigma12.ldlt().solve(r1));
  return Scalar(0.5) * (d12 + d21);
}

namespace detail {

/// Hartley normalization: centroid to origin, mean distance sqrt(2).
template <typename Scalar>
Mat3<Scalar> normalizing_transform(std::span<const Vec2<Scalar>> pts) {
  Vec2<Scalar> mean = Vec2<Scalar>::Zero();
  for (const auto& p : pts) mean += p;
  mean /= Scalar(pts.size());
  Scalar dist = 0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= Scalar(pts.size());
  const Scalar s = dist > Scalar(0) ? std::sqrt(Scalar(2)) / dist : Scalar(1);
  Mat3<Scalar> t;
  t << s, 0, -s * mean.x(),
       0, s, -s * mean.y(),
       0, 0, 1;
  return t;
}

template <typename Scalar>
bool has_collinear_triple(std::span<const Vec2<Scalar>> pts, Scalar tol) {
  const std::size_t n = pts.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) {
        const Vec2<Scalar> ab = pts[b] - pts[a];
        const Vec2<Scalar> ac = pts[c] - pts[a];
        const Scalar area = std::abs(ab.x() * ac.y() - ab.y() * ac.x());
        const Scalar scale = std::max(ab.squaredNorm(), ac.squaredNorm());
        if (area <= tol * scale) return true;
      }
  return false;
}

}  // namespace detail

/// Normalized DLT. Minimal samples (4 matches) are checked for collinear
/// view-1 triples; larger sets only for rank deficiency of the design matrix.
template <typename Scalar>
Homography<Scalar> estimate_homography_dlt(std::span<const Correspondence<Scalar>> matches) {
  const std::size_t n = matches.size();
  if (n < 4) throw TooFewPoints("DLT needs at least 4 correspondences");

  std::vector<Vec2<Scalar>> p1(n), p2(n);
  for (std::size_t i = 0; i < n; ++i) {
    p1[i] = matches[i].u1;
    p2[i] = matches[i].u2;
  }
  if (n == 4 && (detail::has_collinear_triple<Scalar>(p1, Scalar(1e-9)) ||
                 detail::has_collinear_triple<Scalar>(p2, Scalar(1e-9))))
    throw DegenerateSample("collinear points in minimal sample");

  const Mat3<Scalar> t1 = detail::normalizing_transform<Scalar>(p1);
  const Mat3<Scalar> t2 = detail::normalizing_transform<Scalar>(p2);

  Eigen::Matrix<Scalar, Eigen::Dynamic, 9> a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3<Scalar> x = t1 * p1[i].homogeneous();
    const Vec3<Scalar> y = t2 * p2[i].homogeneous();
    const auto r = Eigen::Index(2 * i);
    a.row(r) << Scalar(0), Scalar(0), Scalar(0), -y.z() * x.transpose(), y.y() * x.transpose();
    a.row(r + 1) << y.z() * x.transpose(), Scalar(0), Scalar(0), Scalar(0), -y.x() * x.transpose();
  }

  Eigen::Matrix<Scalar, 9, 1> h;
  Eigen::Matrix<Scalar, 9, 1> sv;
  if (n == 4) {
    // 8x9 system: pad to square so the full right basis is available.
    Eigen::Matrix<Scalar, 9, 9> sq = Eigen::Matrix<Scalar, 9, 9>::Zero();
    sq.topRows(8) = a;
    Eigen::JacobiSVD<Eigen::Matrix<Scalar, 9, 9>> svd(sq, Eigen::ComputeFullV);
    sv = svd.singularValues();
    h = svd.matrixV().col(8);
    if (sv(7) <= Scalar(1e-9) * sv(0)) throw DegenerateSample("rank-deficient DLT system");
  } else {
    Eigen::JacobiSVD<Eigen::Matrix<Scalar, Eigen::Dynamic, 9>> svd(a, Eigen::ComputeThinV);
    sv = svd.singularValues();
    h = svd.matrixV().col(8);
    if (sv(7) <= Scalar(1e-9) * sv(0)) throw DegenerateSample("rank-deficient DLT system");
  }

  Mat3<Scalar> hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3<Scalar> denorm = t2.inverse() * hn * t1;
  try {
    return Homography<Scalar>(denorm);
  } catch (const NonInvertible&) {
    throw DegenerateSample("DLT produced a singular homography");
  }
}

/// Inverse-depth plane xi(u) = <w, u> + c over pixel coordinates.
template <typename Scalar = double>
struct InverseDepthPlane {
  Vec2<Scalar> w = Vec2<Scalar>::Zero();
  Scalar c = 0;

  Scalar predict(const Vec2<Scalar>& u) const { return w.dot(u) + c; }

  /// Parameter vector (w * scale, c); `scale` converts w into 1/m units.
  Vec3<Scalar> scaled_params(Scalar scale) const { return {w.x() * scale, w.y() * scale, c}; }
};

template <typename Scalar>
Scalar plane_cost(const Vec2<Scalar>& u, Scalar xi, const InverseDepthPlane<Scalar>& plane, Scalar sigma_xi) {
  if (!(xi > Scalar(0)) || !std::isfinite(double(xi))) throw InvalidDepth("inverse depth must be positive and finite");
  const Scalar r = (xi - plane.predict(u)) / sigma_xi;
  return r * r;
}

/// A pixel with its observed inverse depth.
template <typename Scalar = double>
struct DepthSample {
  Vec2<Scalar> u = Vec2<Scalar>::Zero();
  Scalar xi = 0;
};

/// Weighted least-squares fit of (w, c). Throws DegenerateSample when the
/// weighted pixels are collinear or fewer than three.
template <typename Scalar>
InverseDepthPlane<Scalar> fit_plane(std::span<const DepthSample<Scalar>> pixels,
                                    std::span<const Scalar> weights = {}) {
  if (!weights.empty() && weights.size() != pixels.size()) throw DimensionMismatch("weights size differs from pixels");
  const std::size_t n = pixels.size();
  if (n < 3) throw DegenerateSample("plane fit needs at least 3 pixels");

  Scalar wsum = 0;
  Vec2<Scalar> mean = Vec2<Scalar>::Zero();
  Scalar xi_mean = 0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar wt = weights.empty() ? Scalar(1) : weights[i];
    if (wt < Scalar(0)) throw Error("negative weight");
    if (wt > Scalar(0)) ++support;
    wsum += wt;
    mean += wt * pixels[i].u;
    xi_mean += wt * pixels[i].xi;
  }
  if (support < 3 || !(wsum > Scalar(0))) throw DegenerateSample("plane fit needs at least 3 weighted pixels");
  mean /= wsum;
  xi_mean /= wsum;

  // Centered normal equations for w; c follows from the weighted means.
  Mat2<Scalar> a = Mat2<Scalar>::Zero();
  Vec2<Scalar> b = Vec2<Scalar>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar wt = weights.empty() ? Scalar(1) : weights[i];
    const Vec2<Scalar> d = pixels[i].u - mean;
    a.noalias() += wt * d * d.transpose();
    b.noalias() += wt * d * (pixels[i].xi - xi_mean);
  }
  Eigen::SelfAdjointEigenSolver<Mat2<Scalar>> eig(a);
  const auto ev = eig.eigenvalues();
  if (!(ev(1) > Scalar(0)) || ev(0) <= Scalar(1e-10) * ev(1)) throw DegenerateSample("collinear pixels");

  InverseDepthPlane<Scalar> plane;
  plane.w = a.ldlt().solve(b);
  plane.c = xi_mean - plane.w.dot(mean);
  return plane;
}

}  // namespace coral
