#include "coral/simworld.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "coral/metrics.hpp"

namespace coral {

Eigen::Matrix<double, 3, 4> PinholeCamera::projection() const {
  Eigen::Matrix<double, 3, 4> rt;
  rt << R, t;
  return K * rt;
}

std::optional<Vec2<double>> PinholeCamera::project(const Vec3<double>& x) const {
  const Vec3<double> xc = R * x + t;
  if (!(xc.z() > 1e-9)) return std::nullopt;
  return (K * xc).hnormalized();
}

PinholeCamera PinholeCamera::look_at(const Mat3<double>& K, const Vec3<double>& center, const Vec3<double>& target) {
  const Vec3<double> forward = (target - center).normalized();
  const Vec3<double> right = forward.cross(Vec3<double>::UnitZ()).normalized();
  const Vec3<double> down = forward.cross(right);
  PinholeCamera cam;
  cam.K = K;
  cam.R.row(0) = right.transpose();
  cam.R.row(1) = down.transpose();
  cam.R.row(2) = forward.transpose();
  cam.t = -cam.R * center;
  return cam;
}

namespace {

bool inside(const Vec2<double>& p, const SimConfig& cfg) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() < double(cfg.width) && p.y() < double(cfg.height);
}

// Homography of the world plane n . X = d from camera 1 to camera 2 pixels.
Homography<double> plane_homography(const PinholeCamera& c1, const PinholeCamera& c2, const Vec3<double>& n, double d) {
  const Vec3<double> n1 = c1.R * n;
  const double d1 = d + n1.dot(c1.t);
  const Mat3<double> R = c2.R * c1.R.transpose();
  const Vec3<double> t = c2.t - R * c1.t;
  const Mat3<double> h = c2.K * (R + t * n1.transpose() / d1) * c1.K.inverse();
  return Homography<double>(h);
}

}  // namespace

SimSample generate_scene(const SimConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Mat3<double> K;
  K << cfg.focal, 0, cfg.width / 2.0, 0, cfg.focal, cfg.height / 2.0, 0, 0, 1;
  const double side = cfg.patch_side;
  const Vec3<double> target = Vec3<double>::Constant(side / 3.0);
  const double half = cfg.baseline_deg * std::numbers::pi / 360.0;
  auto view_dir = [&](double angle) {
    const Vec3<double> d = Vec3<double>(1, 1, 1).normalized();
    const Eigen::AngleAxisd rot(angle, Vec3<double>::UnitZ());
    return (rot * d).eval();
  };

  SimSample s;
  s.camera1 = PinholeCamera::look_at(K, target + cfg.camera_distance * view_dir(-half), target);
  s.camera2 = PinholeCamera::look_at(K, target + cfg.camera_distance * view_dir(half), target);
  s.normals = {Vec3<double>::UnitX(), Vec3<double>::UnitY(), Vec3<double>::UnitZ()};
  for (int p = 0; p < 3; ++p) s.homographies[std::size_t(p)] = plane_homography(s.camera1, s.camera2, s.normals[std::size_t(p)], 0.0);

  // Inliers: uniform on each patch, kept when visible in both views.
  std::vector<std::pair<Vec2<double>, Vec2<double>>> clean;
  for (int p = 0; p < 3; ++p) {
    int made = 0;
    while (made < cfg.points_per_plane) {
      Vec3<double> x = Vec3<double>::Zero();
      const double a = side * unit(rng);
      const double b = side * unit(rng);
      x((p + 1) % 3) = a;
      x((p + 2) % 3) = b;
      const auto u1 = s.camera1.project(x);
      const auto u2 = s.camera2.project(x);
      if (!u1 || !u2 || !inside(*u1, cfg) || !inside(*u2, cfg)) continue;
      s.points.push_back(x);
      s.labels.push_back(p);
      clean.emplace_back(*u1, *u2);
      ++made;
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  auto noisy = [&](const Vec2<double>& u) {
    if (cfg.sigma_pixel <= 0.0) return u;
    const double dx = noise(rng);
    const double dy = noise(rng);
    return Vec2<double>(u.x() + cfg.sigma_pixel * dx, u.y() + cfg.sigma_pixel * dy);
  };
  for (const auto& [u1, u2] : clean) {
    const Vec2<double> a = noisy(u1);
    const Vec2<double> b = noisy(u2);
    s.correspondences.push_back({a, b, Index(s.correspondences.size())});
  }

  // Outliers: uniform in the patch bounding box inflated by 20%.
  const auto inliers = s.correspondences.size();
  const auto outliers = std::size_t(std::llround(cfg.outlier_ratio * double(inliers)));
  const double lo = -0.1 * side;
  const double span = 1.2 * side;
  while (s.correspondences.size() < inliers + outliers) {
    const Vec3<double> x(lo + span * unit(rng), lo + span * unit(rng), lo + span * unit(rng));
    const auto u1 = s.camera1.project(x);
    const auto u2 = s.camera2.project(x);
    if (!u1 || !u2 || !inside(*u1, cfg) || !inside(*u2, cfg)) continue;
    const Vec2<double> a = noisy(*u1);
    const Vec2<double> b = noisy(*u2);
    s.points.push_back(x);
    s.labels.push_back(kOutlier);
    s.correspondences.push_back({a, b, Index(s.correspondences.size())});
  }
  return s;
}

Vec3<double> triangulate(const Correspondence<double>& c, const PinholeCamera& cam1, const PinholeCamera& cam2) {
  const Vec3<double> r1 = cam1.R.transpose() * (cam1.K.inverse() * c.u1.homogeneous());
  const Vec3<double> r2 = cam2.R.transpose() * (cam2.K.inverse() * c.u2.homogeneous());
  const double sin_angle = r1.normalized().cross(r2.normalized()).norm();
  if (sin_angle < 1e-12) throw DegenerateRays("rays are parallel");

  const auto p1 = cam1.projection();
  const auto p2 = cam2.projection();
  Eigen::Matrix4d a;
  a.row(0) = c.u1.x() * p1.row(2) - p1.row(0);
  a.row(1) = c.u1.y() * p1.row(2) - p1.row(1);
  a.row(2) = c.u2.x() * p2.row(2) - p2.row(0);
  a.row(3) = c.u2.y() * p2.row(2) - p2.row(1);
  // Row scaling improves conditioning with pixel-sized coefficients.
  for (int r = 0; r < 4; ++r) a.row(r).normalize();
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (std::abs(x(3)) < 1e-15) throw DegenerateRays("point at infinity");
  return x.hnormalized();
}

std::uint64_t trial_seed(std::uint64_t base, int trial) {
  std::seed_seq seq{std::uint32_t(base), std::uint32_t(base >> 32), std::uint32_t(trial), 0x5eedu};
  std::uint64_t out = 0;
  std::vector<std::uint32_t> v(2);
  seq.generate(v.begin(), v.end());
  out = (std::uint64_t(v[0]) << 32) | v[1];
  return out;
}

double evaluate_method(const std::string& method, const SimSample& sample, double sigma_pixel,
                       const SweepOptions& opt, std::uint64_t seed) {
  HomographyTask task = opt.task;
  task.correspondences = sample.correspondences;
  task.sigma_pixel = std::max(sigma_pixel, opt.min_sigma);
  task.seed = seed;
  if (method == "coral") return misclassification_error(run_homography_segmentation(task).labels, sample.labels);
  if (method == "ransac") return misclassification_error(run_homography_ransac(task).labels, sample.labels);
  throw Error("unknown method '" + method + "'");
}

namespace {

std::vector<SweepRow> run_sweep(const std::vector<double>& values, const SweepOptions& opt, bool noise) {
  for (const auto& m : opt.methods)
    if (m != "coral" && m != "ransac") throw Error("unknown method '" + m + "'");
  if (opt.trials < 1) throw Error("trials must be at least 1");

  std::vector<SweepRow> rows;
  for (double v : values)
    for (const auto& m : opt.methods)
      for (int t = 0; t < opt.trials; ++t) rows.push_back({m, v, t, 0.0});

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < rows.size(); job = next++) {
      SweepRow& row = rows[job];
      SimConfig cfg;
      cfg.points_per_plane = opt.points_per_plane;
      cfg.sigma_pixel = noise ? row.sweep_value : 1.0;
      cfg.outlier_ratio = noise ? 0.0 : row.sweep_value;
      const std::uint64_t seed = trial_seed(opt.seed, row.trial);
      const SimSample sample = generate_scene(cfg, seed);
      row.me = evaluate_method(row.method, sample, cfg.sigma_pixel, opt, seed);
    }
  };
  const int threads = std::max(1, opt.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  return rows;
}

}  // namespace

std::vector<SweepRow> run_noise_sweep(const std::vector<double>& sigmas, const SweepOptions& opt) {
  return run_sweep(sigmas, opt, true);
}

std::vector<SweepRow> run_outlier_sweep(const std::vector<double>& ratios, const SweepOptions& opt) {
  return run_sweep(ratios, opt, false);
}

InverseDepthPlane<double> inverse_depth_plane(const Vec3<double>& n, double d, double focal, double cx, double cy) {
  if (d == 0.0) throw Error("plane passes through the camera center");
  // 1/z = n . K^-1 (x, y, 1) / d
  InverseDepthPlane<double> p;
  p.w = Vec2<double>(n.x(), n.y()) / (focal * d);
  p.c = (n.z() - n.x() * cx / focal - n.y() * cy / focal) / d;
  return p;
}

WedgeScene render_wedge(const WedgeConfig& cfg, std::uint64_t seed) {
  if (cfg.width < 2 || cfg.height < 1) throw Error("wedge needs at least 2 x 1 pixels");
  if (!(cfg.focal > 0.0) || !(cfg.crease_depth > 0.0)) throw Error("focal and crease depth must be positive");
  if (cfg.sigma_xi < 0.0) throw Error("sigma_xi must be non-negative");

  const double a = cfg.half_angle_deg * std::numbers::pi / 180.0;
  const double cx = double(cfg.width) / 2.0 - 0.5;
  const double cy = double(cfg.height) / 2.0 - 0.5;
  // Both faces contain the line x = 0, z = crease_depth; the left face leans
  // toward the camera on the left, the right face on the right.
  const Vec3<double> nl(-std::sin(a), 0.0, std::cos(a));
  const Vec3<double> nr(std::sin(a), 0.0, std::cos(a));
  const double d = std::cos(a) * cfg.crease_depth;

  WedgeScene s;
  s.width = cfg.width;
  s.height = cfg.height;
  s.planes = {inverse_depth_plane(nl, d, cfg.focal, cx, cy), inverse_depth_plane(nr, d, cfg.focal, cx, cy)};
  const std::size_t n = std::size_t(cfg.width * cfg.height);
  s.inverse_depth.resize(n);
  s.intensity.resize(n);
  s.labels.resize(n);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index y = 0; y < cfg.height; ++y) {
    for (Index x = 0; x < cfg.width; ++x) {
      const std::size_t i = std::size_t(y * cfg.width + x);
      const int side = double(x) < cx ? 0 : 1;
      double xi = s.planes[std::size_t(side)].predict(Vec2<double>(double(x), double(y)));
      if (cfg.sigma_xi > 0.0) xi += cfg.sigma_xi * noise(rng);
      s.inverse_depth[i] = std::max(xi, 0.0);
      s.intensity[i] = side == 0 ? cfg.left_intensity : cfg.right_intensity;
      s.labels[i] = side;
    }
  }
  return s;
}

}  // namespace coral
