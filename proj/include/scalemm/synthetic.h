#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "scalemm/dataset.h"
#include "scalemm/geometry.h"
#include "scalemm/scale_solver.h"

namespace scalemm {

struct SceneConfig {
  std::size_t n_points = 1000;
  double cube_side = 2000.0;
  std::size_t n_cameras = 100;
  double noise_sigma = 0.001;  // normalized coordinates
  double baseline_d = 1.0;     // rig translation is [d 0 0]
  Mat3 rig_rotation = Mat3::Identity();
  std::size_t trials = 100;
  std::uint64_t rng_seed = 0;

  // Camera centers are drawn uniformly (by volume) from a shell around the
  // cube center. Radii are multiples of the cube's half diagonal, so any
  // inner factor above 1 puts every point in front of every camera.
  double shell_inner = 1.05;
  double shell_outer = 2.0;
  // Full cone angle in degrees. Unset means every point with Z > 0 is seen.
  std::optional<double> fov_degrees;
  std::size_t min_visible = 8;
  std::size_t min_shared = 8;
  int max_placement_retries = 100;
  // Worker threads for trials; 0 picks the hardware concurrency.
  unsigned threads = 0;

  // Throws std::invalid_argument.
  void validate() const;
};

struct SyntheticScene {
  std::vector<Vec3> points;
  std::vector<RigidTransform> poses_primary;
  std::vector<RigidTransform> poses_secondary;  // rig extrinsic composed with the primary pose
  StereoRig rig;
  // observations[k][l] is point l in the secondary image of camera k, noise
  // included. Only meaningful where visible[k][l] is set.
  std::vector<std::vector<NormalizedPoint>> observations;
  std::vector<std::vector<std::uint8_t>> visible;
};

// Generator for trial `trial` of a configuration; independent of how trials
// are scheduled.
std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial);

// Throws PlacementFailure when a camera cannot be placed with min_visible
// points in view.
SyntheticScene generate_scene(const SceneConfig& config, std::mt19937_64& rng);
SyntheticScene generate_scene(const SceneConfig& config);

// Correspondences of every camera pair i < j with at least min_shared
// common points.
std::vector<PairObservation> scene_pairs(const SyntheticScene& scene, std::size_t min_shared);

// Alg1 systems for every eligible pair. Alg2 systems are their swapped().
std::vector<PairSystem> build_pair_systems(const SyntheticScene& scene, std::size_t min_shared);

// The scene as a dataset with unit intrinsics, so pixels are normalized
// coordinates. The true scale is 1 under both placements.
Dataset scene_dataset(const SyntheticScene& scene, std::size_t min_shared);

struct TrialStats {
  double baseline_d = 0.0;
  double sigma_n = 0.0;
  ScalePlacement placement = ScalePlacement::kMotion;
  std::vector<double> values;  // 1/s for Alg1, s for Alg2; NaN marks a failed trial
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation of the finite values
  std::size_t failures = 0;

  void recompute();
};

// The statistic plotted for a placement.
double reported_value(double s, ScalePlacement placement);

TrialStats run_trials(const SceneConfig& config, ScalePlacement placement,
                      const SolverConfig& solver = {});

// Both placements on the same scenes, Alg1 first.
std::vector<TrialStats> run_trials_both(const SceneConfig& config,
                                        const SolverConfig& solver = {});

// For each d, the requested placements in order.
std::vector<TrialStats> baseline_sweep(const SceneConfig& base, const std::vector<double>& d_values,
                                       const std::vector<ScalePlacement>& placements,
                                       const SolverConfig& solver = {});

// n values evenly spaced in log10 between lo and hi inclusive.
std::vector<double> logspace(double lo, double hi, std::size_t n);

// CSV text with header `algorithm,d,sigma_n,trial,value`.
std::string trials_csv(const std::vector<TrialStats>& stats);
// CSV text with header `algorithm,d,mean,sd,failures`.
std::string summary_csv(const std::vector<TrialStats>& stats);

}  // namespace scalemm
