#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "scalemm/geometry.h"

namespace scalemm {

struct SolverConfig {
  // Fixed cutoff on |e_k| in normalized-coordinate units. When unset, each
  // pair gets mad_multiplier * 1.4826 * median|e_k| at the current hypothesis.
  std::optional<double> residual_threshold;
  double mad_multiplier = 3.0;
  // Pairs with fewer input correspondences are skipped.
  std::size_t min_correspondences_per_pair = 8;
  // Cap on solve/reject rounds.
  int ransac_iterations = 10;
  std::uint64_t rng_seed = 0;
  // Fraction of each pair's correspondences drawn (with rng_seed) before
  // solving. 1.0 uses every row and makes the result seed-independent.
  double sample_fraction = 1.0;

  void validate() const;
};

struct ScaleEstimate {
  double s = 0.0;
  ScalePlacement placement = ScalePlacement::kMotion;
  std::size_t pairs_used = 0;
  std::size_t pairs_flagged = 0;  // uninformative pairs excluded from the sums
  std::size_t correspondences_used = 0;
  std::size_t correspondences_total = 0;
  double inlier_fraction = 1.0;
  double residual_rms = 0.0;
  double numerator = 0.0;    // sum f^T U^T U g
  double denominator = 0.0;  // sum f^T U^T U f
  int rounds = 0;
  bool converged = true;
  bool negative_scale = false;
};

// One image pair reduced to the two per-row linear forms u_k.f and u_k.g.
// The residual of row k at scale s is s * uf[k] + ug[k].
class PairSystem {
 public:
  PairSystem() = default;
  PairSystem(const PairObservation& obs, const PairCoefficients& coeffs);
  // `products` holds (f.f, f.g, g.g) of the 9-vectors when known, zeros
  // otherwise.
  PairSystem(int source, int target, ScalePlacement placement, std::vector<double> uf,
             std::vector<double> ug, const Vec3& products = Vec3::Zero());

  // The same rows under the other scale placement. Moving s from the motion
  // translation to the rig baseline exchanges the roles of f and g.
  PairSystem swapped() const;

  int source() const { return source_; }
  int target() const { return target_; }
  ScalePlacement placement() const { return placement_; }
  std::size_t size() const { return uf_.size(); }
  std::span<const double> uf() const { return uf_; }
  std::span<const double> ug() const { return ug_; }
  double residual(std::size_t k, double s) const { return s * uf_[k] + ug_[k]; }
  const Vec3& products() const { return products_; }
  // Frobenius norm of E(s), or 1 when the products are unknown.
  double essential_norm(double s) const;

 private:
  int source_ = 0;
  int target_ = 0;
  ScalePlacement placement_ = ScalePlacement::kMotion;
  std::vector<double> uf_, ug_;
  Vec3 products_ = Vec3::Zero();
};

using RowMask = std::vector<std::uint8_t>;

// Builds the per-pair systems for a list of observations sharing one rig.
std::vector<PairSystem> make_pair_systems(std::span<const PairObservation> observations,
                                          std::span<const PairCoefficients> coefficients);

// J(s) = 1/2 sum ||U (s f + g)||^2 over every row.
double objective(std::span<const PairSystem> pairs, double s);

// Closed-form minimizer of J over all rows (or the masked rows when masks is
// non-empty). Throws DegenerateSystem when no pair constrains s.
ScaleEstimate solve_scale(std::span<const PairSystem> pairs,
                          std::span<const RowMask> masks = {});

ScaleEstimate solve_scale(std::span<const PairObservation> observations,
                          std::span<const PairCoefficients> coefficients);

// Per-pair cutoff used when SolverConfig::residual_threshold is unset.
// Never below a tiny fraction of the pair's residual magnitude, so exact
// data is not split by rounding noise.
double adaptive_threshold(const PairSystem& pair, double s, double mad_multiplier,
                          std::span<const std::uint8_t> eligible = {});

// Rows of `pair` kept at hypothesis s, restricted to `eligible` when given.
RowMask inlier_mask(const PairSystem& pair, double s, const SolverConfig& config,
                    std::span<const std::uint8_t> eligible = {});

// Correspondences with |e_k| <= threshold, order preserved. Throws
// AllRejected when none survive.
PairObservation reject_outliers(const PairObservation& pair, const PairCoefficients& coeffs,
                                double s_hypothesis, const SolverConfig& config);

// Starts from the least-median hypothesis (see least_median_start), then
// alternates per-pair rejection and solve_scale until the inlier sets
// repeat or config.ransac_iterations rounds have run.
// Among the closed-form estimate `s_ls` and quantiles of the per-row ratios
// -ug/uf, the hypothesis minimizing the sum over pairs of the median
// |e_k| / ||E(s)||. Evaluated on a strided subset of pairs and rows.
double least_median_start(std::span<const PairSystem> pairs, std::span<const RowMask> eligible,
                          double s_ls);

ScaleEstimate solve_scale_robust(std::span<const PairSystem> pairs, const SolverConfig& config);

}  // namespace scalemm
