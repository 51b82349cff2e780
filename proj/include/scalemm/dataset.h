#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "scalemm/geometry.h"

namespace scalemm {

struct PixelMatch {
  Vec2 pixel_i = Vec2::Zero();
  Vec2 pixel_j = Vec2::Zero();

  friend bool operator==(const PixelMatch&, const PixelMatch&) = default;
};

struct GridCell {
  int row = 0;
  int col = 0;

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridGroundTruth {
  double pitch = 100.0;
  std::map<int, GridCell> cells;  // viewpoint id -> grid position

  // pitch times the Euclidean distance between the two grid cells.
  double distance(int i, int j) const;
  std::vector<int> ids() const;

  friend bool operator==(const GridGroundTruth&, const GridGroundTruth&) = default;
};

using PairKey = std::pair<int, int>;

struct Dataset {
  std::string units = "scene";
  bool up_to_scale = true;
  std::map<int, RigidTransform> poses;  // world-to-camera, primary camera
  StereoRig rig;
  std::map<PairKey, std::vector<PixelMatch>> correspondences;  // secondary images
  std::optional<GridGroundTruth> ground_truth;

  // Throws ValidationError on dangling references, empty or non-finite
  // correspondence lists, or an invalid rig.
  void validate() const;
};

// Field-by-field equality. Rotations may differ elementwise by rotation_tol,
// since they are stored as quaternions on disk.
bool same_dataset(const Dataset& a, const Dataset& b, double rotation_tol = 0.0);

// Reads `dataset.json` (or the manifest path itself) and the CSV files it
// names. Throws ParseError with a file:line locator on malformed input and
// ValidationError on invariant breaches.
Dataset load_dataset(const std::filesystem::path& path);

// Writes dataset.json plus CSV blocks into `dir`, creating it if needed.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// Synthetic grid capture: a rig translated over a rows x cols grid at fixed
// pitch, observing a random point slab. Poses are the metric ground truth
// multiplied by sfm_scale, as a monocular reconstruction would give them.
struct GridSceneConfig {
  int rows = 3;
  int cols = 3;
  double pitch = 100.0;           // mm
  double baseline = 26.0;         // mm, along the camera x axis
  Mat3 rig_rotation = Mat3::Identity();
  Intrinsics intrinsics{400.0, 400.0, 160.0, 128.0};
  int image_width = 320;
  int image_height = 256;
  std::size_t n_points = 800;
  double depth_min = 1000.0;      // mm
  double depth_max = 3000.0;
  double pixel_noise = 0.3;       // px, secondary images
  double outlier_fraction = 0.0;  // replaced by uniform random pixels
  // Per-view rotation about a random axis. Scale is only observable in BA
  // through rotation differences between views, so this should not be tiny.
  double rotation_jitter_deg = 15.0;
  std::size_t supplementary_views = 20;  // extra views off the grid, excluded from the metric
  double sfm_scale = 0.37;        // SfM units per mm
  std::size_t min_shared = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

Dataset generate_grid_dataset(const GridSceneConfig& config);

}  // namespace scalemm
