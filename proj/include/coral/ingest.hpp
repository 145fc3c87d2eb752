#pragma once

// File formats: correspondence CSV files and PGM grids for depth, intensity
// and label images, plus ground-truth plane labels built from instance masks.
//
// Correspondence CSV:
//   # <width> <height>
//   u1x,u1y,u2x,u2y,label        (label -1 = outlier)
//
// Grids are plain PGM (P2 ASCII or P5 binary, 8 or 16 bit). Two header
// comments are understood: `# scale <s>` multiplies stored values (depth
// grids, meters per unit) and `# offset <k>` is added to stored values
// (label grids use offset -1 so that 0 stores an outlier).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "coral/pipelines.hpp"

namespace coral {

struct CorrespondenceFile {
  int width = 0;
  int height = 0;
  CorrespondenceSet correspondences;
  /// Ground-truth label per row, kOutlier for outliers.
  Labels labels;
};

CorrespondenceFile parse_correspondences(std::istream& in);
CorrespondenceFile load_correspondences(const std::filesystem::path& path);
/// Coordinates are written with 17 significant digits, so reading back is exact.
void write_correspondences(std::ostream& out, const CorrespondenceFile& file);
void save_correspondences(const std::filesystem::path& path, const CorrespondenceFile& file);

struct Grid {
  Index width = 0;
  Index height = 0;
  int maxval = 255;
  /// Raw stored values, row-major.
  std::vector<std::uint16_t> values;
  std::optional<double> scale;
  long offset = 0;
};

Grid parse_pgm(std::istream& in);
Grid load_pgm(const std::filesystem::path& path);
/// Binary (P5) unless `ascii`.
void write_pgm(std::ostream& out, const Grid& grid, bool ascii = false);
void save_pgm(const std::filesystem::path& path, const Grid& grid, bool ascii = false);

/// Label image with -1 for outliers, stored as label + 1.
Grid label_grid(std::span<const int> labels, Index width, Index height);
Labels grid_labels(const Grid& grid);

/// Depth in meters quantized to 16-bit units of `scale` meters; 0 is invalid.
Grid depth_grid(std::span<const double> depth_m, Index width, Index height, double scale);

struct RgbdFrame {
  Index width = 0;
  Index height = 0;
  /// Meters, 0 = invalid. Row-major.
  std::vector<double> depth;
  /// 1 / depth, 0 = invalid.
  std::vector<double> inverse_depth;
  /// Normalized to [0, 1].
  std::vector<double> intensity;
  /// Instance id per pixel, -1 = unlabeled.
  std::optional<Labels> instances;
};

/// Throws DimensionMismatch when the grids differ in size and ParseError for
/// malformed files or a depth grid without a positive scale.
RgbdFrame load_rgbd(const std::filesystem::path& depth, const std::filesystem::path& image,
                    const std::optional<std::filesystem::path>& labels = std::nullopt);

struct GroundTruthConfig {
  Index min_inliers = 500;
  /// Relative distance of (w * diagonal, c) below which planes are merged.
  double merge_tolerance = 0.05;
  double sigma_xi = 0.005;
  double inlier_threshold = 9.0;
  int iterations = 500;
  std::uint64_t seed = 1;
};

/// Per-pixel ground-truth plane labels from instance masks. Every instance
/// gets a consensus plane fit and refit; instances with fewer than
/// min_inliers inliers become outliers, and planes closer than the merge
/// tolerance share a label. Labels are numbered by their smallest instance id.
/// Running it again with the result as instances returns the same labels.
/// Throws NoLabels when the frame carries no instances.
Labels build_nyu_ground_truth(const RgbdFrame& frame, const GroundTruthConfig& cfg = {});

}  // namespace coral
