#pragma once

// Synthetic two-view scene: three mutually orthogonal planar patches meeting
// at a corner (two walls and a floor), observed by two pinhole cameras with
// pixel noise and uniformly placed outliers.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coral/geometry.hpp"
#include "coral/pipelines.hpp"

namespace coral {

struct PinholeCamera {
  Mat3<double> K = Mat3<double>::Identity();
  Mat3<double> R = Mat3<double>::Identity();  // world to camera
  Vec3<double> t = Vec3<double>::Zero();      // X_cam = R X + t

  Vec3<double> center() const { return -R.transpose() * t; }
  Eigen::Matrix<double, 3, 4> projection() const;
  /// Pixel of a world point; nullopt behind the camera.
  std::optional<Vec2<double>> project(const Vec3<double>& x) const;

  /// Camera at `center` looking at `target` with world +z as up.
  static PinholeCamera look_at(const Mat3<double>& K, const Vec3<double>& center, const Vec3<double>& target);
};

struct SimConfig {
  int points_per_plane = 100;
  double sigma_pixel = 1.0;
  /// Outliers per inlier.
  double outlier_ratio = 0.0;
  double patch_side = 2.0;
  double camera_distance = 4.0;
  double baseline_deg = 30.0;
  int width = 640;
  int height = 480;
  double focal = 525.0;
};

struct SimSample {
  CorrespondenceSet correspondences;
  Labels labels;  // plane index or kOutlier
  std::vector<Vec3<double>> points;
  std::array<Homography<double>, 3> homographies;
  std::array<Vec3<double>, 3> normals;
  PinholeCamera camera1;
  PinholeCamera camera2;
};

/// Deterministic for a given (cfg, seed). Inliers are drawn first, then the
/// noise, then the outliers, so scenes that differ only in outlier_ratio
/// share their inliers.
SimSample generate_scene(const SimConfig& cfg, std::uint64_t seed);

/// Linear (DLT) triangulation. Throws DegenerateRays for parallel rays.
Vec3<double> triangulate(const Correspondence<double>& c, const PinholeCamera& cam1, const PinholeCamera& cam2);

struct SweepOptions {
  std::vector<std::string> methods{"coral", "ransac"};
  int trials = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  int points_per_plane = 100;
  /// Solver parameters; correspondences and sigma_pixel are filled per trial.
  HomographyTask task;
  /// The pipelines never assume less pixel noise than this.
  double min_sigma = 0.5;
};

struct SweepRow {
  std::string method;
  double sweep_value = 0;
  int trial = 0;
  double me = 0;
};

/// Scene seed of a trial; shared by both sweeps and all methods.
std::uint64_t trial_seed(std::uint64_t base, int trial);

/// Mean ME per (sigma, method) over trials, no outliers. Rows are ordered by
/// sweep value, then method, then trial.
std::vector<SweepRow> run_noise_sweep(const std::vector<double>& sigmas, const SweepOptions& opt);

/// As run_noise_sweep with sigma_pixel fixed at 1 and the outlier ratio swept.
std::vector<SweepRow> run_outlier_sweep(const std::vector<double>& ratios, const SweepOptions& opt);

/// Runs one method on one scene and returns its ME.
double evaluate_method(const std::string& method, const SimSample& sample, double sigma_pixel,
                       const SweepOptions& opt, std::uint64_t seed);

/// Two planes meeting at a vertical crease in front of a pinhole camera,
/// rendered as an inverse-depth image. The crease runs between columns
/// width/2 - 1 and width/2 and carries a step in intensity.
struct WedgeConfig {
  Index width = 48;
  Index height = 32;
  double focal = 48.0;
  /// Depth of the crease, meters.
  double crease_depth = 2.0;
  /// Tilt of each face away from fronto-parallel.
  double half_angle_deg = 30.0;
  /// Gaussian noise added to inverse depth (1/m).
  double sigma_xi = 0.0;
  double left_intensity = 0.2;
  double right_intensity = 0.8;
};

struct WedgeScene {
  Index width = 0;
  Index height = 0;
  std::vector<double> inverse_depth;
  std::vector<double> intensity;
  /// 0 left face, 1 right face.
  Labels labels;
  std::array<InverseDepthPlane<double>, 2> planes;
};

WedgeScene render_wedge(const WedgeConfig& cfg, std::uint64_t seed = 1);

/// Inverse-depth plane, in pixel coordinates, of the camera-frame plane
/// n . X = d seen by a pinhole camera with focal f and principal point (cx, cy).
InverseDepthPlane<double> inverse_depth_plane(const Vec3<double>& n, double d, double focal, double cx, double cy);

}  // namespace coral
