#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "scalemm/bundle_adjust.h"
#include "scalemm/dataset.h"
#include "scalemm/scale_solver.h"

namespace scalemm {

// s * L for kMotion, L / s for kRig.
double estimated_distance(double sfm_length, double s, ScalePlacement placement);

// Signed percent error (d_hat - d_true) / d_true * 100.
double relative_error(double d_hat, double d_true);

enum class Stage { kBeforeBA, kAfterBA };
std::string_view to_string(Stage stage);

struct PairError {
  int i = 0;
  int j = 0;
  double sfm_length = 0.0;  // L
  double d_true = 0.0;
  double d_hat = 0.0;
  double epsilon = 0.0;  // percent
};

struct EvalReport {
  Stage stage = Stage::kBeforeBA;
  ScaleEstimate s_used;
  std::vector<PairError> pairs;
  double mean_epsilon = 0.0;  // signed, percent
  std::size_t n_views = 0;    // grid viewpoints entering the mean

  double abs_mean_epsilon() const;
};

// Mean of the per-pair errors over every grid pair i < j.
EvalReport grid_report(const Dataset& dataset, const ScaleEstimate& estimate, Stage stage);

struct EvalConfig {
  SolverConfig solver;
  BAConfig ba;
  bool run_ba = true;
};

struct EvalResult {
  ScalePlacement placement = ScalePlacement::kMotion;
  EvalReport before;
  EvalReport after;
  BAReport ba;
  std::size_t landmarks = 0;        // tracks that entered BA
  std::size_t dropped_tracks = 0;   // inconsistent or not triangulable
};

// Secondary-image correspondences in normalized coordinates with the
// matching pair coefficients.
struct PairInputs {
  std::vector<PairObservation> observations;
  std::vector<PairCoefficients> coefficients;
};
PairInputs dataset_pairs(const Dataset& dataset, ScalePlacement placement);

ScaleEstimate estimate_scale(const Dataset& dataset, ScalePlacement placement,
                             const SolverConfig& config);

// Landmark tracks built by chaining correspondences that share an exact
// pixel in some view. Tracks that revisit a view with a different pixel are
// dropped. Views are indexed in ascending id order.
struct TrackSet {
  std::vector<int> view_ids;
  std::vector<std::vector<TrackObservation>> tracks;
  std::size_t dropped = 0;
};
TrackSet build_tracks(const Dataset& dataset);

// Triangulates the tracks at scale s and assembles the BA problem.
// Tracks that cannot be triangulated are skipped and counted in `dropped`.
BAProblem make_ba_problem(const Dataset& dataset, const TrackSet& tracks, double s,
                          ScalePlacement placement, std::size_t* dropped = nullptr);

// Closed-form robust estimate (before BA) followed by scale-oriented BA
// (after BA). Errors are rethrown with the failing stage prefixed to the
// message. Requires ground truth.
EvalResult evaluate(const Dataset& dataset, ScalePlacement placement, const EvalConfig& config);

struct AbsErrorStats {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  std::size_t count = 0;
};
AbsErrorStats abs_error_stats(const std::vector<double>& signed_means);

}  // namespace scalemm
