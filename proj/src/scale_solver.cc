#include "scalemm/scale_solver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <random>
#include <stdexcept>
#include <string>

#include "scalemm/errors.h"
#include "scalemm/kernels.h"

namespace scalemm {
namespace {

// Normal-consistency factor turning a median absolute deviation into a
// standard deviation estimate.
constexpr double kMadToSigma = 1.4826;
// Pairs whose ||U f||^2 falls below this fraction of ||U g||^2 carry no
// information about s.
constexpr double kUninformativeRatio = 1e-12;
// Adaptive thresholds never drop below this fraction of the residual scale.
constexpr double kThresholdFloor = 1e-9;
// Largest number of residuals the per-pair median is taken over.
constexpr std::size_t kMedianSampleCap = 256;
// Subsample used to score starting hypotheses.
constexpr std::size_t kStartPairCap = 256;
constexpr std::size_t kStartRowCap = 32;
constexpr std::size_t kStartCandidates = 32;

std::size_t mask_count(std::span<const std::uint8_t> mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

}  // namespace

void SolverConfig::validate() const {
  if (residual_threshold && !(*residual_threshold > 0.0)) {
    throw std::invalid_argument("residual_threshold must be positive");
  }
  if (!(mad_multiplier > 0.0)) throw std::invalid_argument("mad_multiplier must be positive");
  if (min_correspondences_per_pair < 1) {
    throw std::invalid_argument("min_correspondences_per_pair must be at least 1");
  }
  if (ransac_iterations < 0) throw std::invalid_argument("ransac_iterations must be >= 0");
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw std::invalid_argument("sample_fraction must lie in (0, 1]");
  }
}

PairSystem::PairSystem(const PairObservation& obs, const PairCoefficients& coeffs)
    : source_(obs.source()),
      target_(obs.target()),
      placement_(coeffs.placement),
      uf_(obs.size()),
      ug_(obs.size()) {
  const kernels::EpipolarRows rows{obs.xi(), obs.yi(), obs.xj(), obs.yj()};
  kernels::epipolar_forms(rows, coeffs.f, coeffs.g, uf_, ug_);
  products_ = Vec3(coeffs.f.squaredNorm(), coeffs.f.dot(coeffs.g), coeffs.g.squaredNorm());
}

PairSystem::PairSystem(int source, int target, ScalePlacement placement, std::vector<double> uf,
                       std::vector<double> ug, const Vec3& products)
    : source_(source),
      target_(target),
      placement_(placement),
      uf_(std::move(uf)),
      ug_(std::move(ug)),
      products_(products) {
  if (uf_.size() != ug_.size()) throw std::invalid_argument("uf and ug differ in length");
}

PairSystem PairSystem::swapped() const {
  const ScalePlacement other =
      placement_ == ScalePlacement::kMotion ? ScalePlacement::kRig : ScalePlacement::kMotion;
  return {source_, target_, other, ug_, uf_, Vec3(products_[2], products_[1], products_[0])};
}

double PairSystem::essential_norm(double s) const {
  if (products_ == Vec3::Zero()) return 1.0;
  return std::sqrt(std::max(0.0, s * s * products_[0] + 2.0 * s * products_[1] + products_[2]));
}

std::vector<PairSystem> make_pair_systems(std::span<const PairObservation> observations,
                                          std::span<const PairCoefficients> coefficients) {
  if (observations.size() != coefficients.size()) {
    throw std::invalid_argument("observation and coefficient lists differ in length");
  }
  std::vector<PairSystem> out;
  out.reserve(observations.size());
  for (std::size_t p = 0; p < observations.size(); ++p) {
    out.emplace_back(observations[p], coefficients[p]);
  }
  return out;
}

double objective(std::span<const PairSystem> pairs, double s) {
  double sum = 0.0;
  for (const PairSystem& p : pairs) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double e = p.residual(k, s);
      sum += e * e;
    }
  }
  return 0.5 * sum;
}

namespace {

// Closed form from per-pair moments of the rows in use.
ScaleEstimate solve_from_moments(std::span<const PairSystem> pairs,
                                 std::span<const kernels::Moments> moments) {
  ScaleEstimate est;
  if (!pairs.empty()) est.placement = pairs.front().placement();

  std::vector<kernels::Moments> used;
  used.reserve(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    est.correspondences_total += pairs[p].size();
    const kernels::Moments& m = moments[p];
    if (m.count == 0) continue;
    if (m.ff <= kUninformativeRatio * m.gg) {
      ++est.pairs_flagged;
      continue;
    }
    est.numerator += m.fg;
    est.denominator += m.ff;
    est.correspondences_used += m.count;
    ++est.pairs_used;
    used.push_back(m);
  }

  if (est.pairs_used == 0 || !(est.denominator > 0.0) || !std::isfinite(est.denominator) ||
      !std::isfinite(est.numerator)) {
    throw DegenerateSystem("scale is unobservable: " + std::to_string(est.pairs_flagged) +
                           " uninformative pair(s), no pair with ||U f|| > 0");
  }

  est.s = -est.numerator / est.denominator;
  est.negative_scale = !(est.s > 0.0);

  double sq = 0.0;
  for (const kernels::Moments& m : used) sq += est.s * est.s * m.ff + 2.0 * est.s * m.fg + m.gg;
  est.residual_rms = std::sqrt(std::max(0.0, sq) / static_cast<double>(est.correspondences_used));
  est.inlier_fraction = est.correspondences_total > 0
                            ? static_cast<double>(est.correspondences_used) /
                                  static_cast<double>(est.correspondences_total)
                            : 0.0;
  return est;
}

}  // namespace

ScaleEstimate solve_scale(std::span<const PairSystem> pairs, std::span<const RowMask> masks) {
  if (!masks.empty() && masks.size() != pairs.size()) {
    throw std::invalid_argument("mask list length differs from pair list");
  }
  std::vector<kernels::Moments> moments(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    std::span<const std::uint8_t> mask;
    if (!masks.empty()) {
      if (masks[p].size() != pairs[p].size()) {
        throw std::invalid_argument("row mask length differs from pair size");
      }
      mask = masks[p];
    }
    moments[p] = kernels::masked_moments(pairs[p].uf(), pairs[p].ug(), mask);
  }
  return solve_from_moments(pairs, moments);
}

ScaleEstimate solve_scale(std::span<const PairObservation> observations,
                          std::span<const PairCoefficients> coefficients) {
  const std::vector<PairSystem> systems = make_pair_systems(observations, coefficients);
  return solve_scale(systems);
}

namespace {

// What the adaptive threshold needs from a pair besides s: the moments of
// the eligible rows and a copy of the rows the median is taken over. Both
// depend only on the eligibility mask, so the robust loop builds them once.
struct ThresholdPlan {
  kernels::Moments moments;
  std::vector<double> uf, ug;
};

ThresholdPlan plan_threshold(const PairSystem& pair, std::span<const std::uint8_t> eligible) {
  ThresholdPlan plan;
  plan.moments = kernels::masked_moments(pair.uf(), pair.ug(), eligible);
  if (plan.moments.count == 0) return plan;
  // The median is taken over an evenly strided subset of the eligible rows
  // once a pair is large; the cutoff does not need more precision than that.
  const std::size_t stride = (plan.moments.count + kMedianSampleCap - 1) / kMedianSampleCap;
  std::size_t skip = 0;
  for (std::size_t k = 0; k < pair.size(); ++k) {
    if (!eligible.empty() && !eligible[k]) continue;
    if (skip == 0) {
      plan.uf.push_back(pair.uf()[k]);
      plan.ug.push_back(pair.ug()[k]);
      skip = stride;
    }
    --skip;
  }
  return plan;
}

double planned_threshold(const ThresholdPlan& plan, double s, double mad_multiplier) {
  if (plan.moments.count == 0) return 0.0;
  thread_local std::vector<double> residuals;
  residuals.resize(plan.uf.size());
  kernels::abs_residuals(plan.uf, plan.ug, s, residuals);
  const auto mid = residuals.begin() + static_cast<std::ptrdiff_t>(residuals.size() / 2);
  std::nth_element(residuals.begin(), mid, residuals.end());
  const double median = *mid;

  const kernels::Moments& m = plan.moments;
  const double scale = std::sqrt((s * s * m.ff + m.gg) / static_cast<double>(m.count));
  return std::max(mad_multiplier * kMadToSigma * median, kThresholdFloor * scale);
}

}  // namespace

double adaptive_threshold(const PairSystem& pair, double s, double mad_multiplier,
                          std::span<const std::uint8_t> eligible) {
  return planned_threshold(plan_threshold(pair, eligible), s, mad_multiplier);
}

RowMask inlier_mask(const PairSystem& pair, double s, const SolverConfig& config,
                    std::span<const std::uint8_t> eligible) {
  const double threshold = config.residual_threshold
                               ? *config.residual_threshold
                               : adaptive_threshold(pair, s, config.mad_multiplier, eligible);
  RowMask out(pair.size());
  kernels::threshold_mask(pair.uf(), pair.ug(), s, threshold, eligible, out);
  return out;
}

PairObservation reject_outliers(const PairObservation& pair, const PairCoefficients& coeffs,
                                double s_hypothesis, const SolverConfig& config) {
  if (!std::isfinite(s_hypothesis)) throw std::invalid_argument("scale hypothesis is not finite");
  config.validate();
  const PairSystem system(pair, coeffs);
  const RowMask keep = inlier_mask(system, s_hypothesis, config);
  if (mask_count(keep) == 0) {
    throw AllRejected("every correspondence of pair (" + std::to_string(pair.source()) + "," +
                      std::to_string(pair.target()) + ") exceeds the residual threshold");
  }
  return pair.subset(keep);
}

double least_median_start(std::span<const PairSystem> pairs, std::span<const RowMask> eligible,
                          double s_ls) {
  struct Sample {
    const PairSystem* pair;
    std::vector<double> uf, ug;
  };
  std::vector<std::size_t> usable;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (eligible.empty() || mask_count(eligible[p]) > 0) usable.push_back(p);
  }
  const std::size_t pair_stride = std::max<std::size_t>(1, (usable.size() + kStartPairCap - 1) / kStartPairCap);
  std::vector<Sample> samples;
  std::vector<double> ratios;
  for (std::size_t q = 0; q < usable.size(); q += pair_stride) {
    const PairSystem& pair = pairs[usable[q]];
    const std::span<const std::uint8_t> mask =
        eligible.empty() ? std::span<const std::uint8_t>() : std::span<const std::uint8_t>(eligible[usable[q]]);
    const std::size_t n = mask.empty() ? pair.size() : mask_count(mask);
    const std::size_t stride = (n + kStartRowCap - 1) / kStartRowCap;
    Sample sample{&pair, {}, {}};
    std::size_t skip = 0;
    for (std::size_t k = 0; k < pair.size(); ++k) {
      if (!mask.empty() && !mask[k]) continue;
      if (skip == 0) {
        sample.uf.push_back(pair.uf()[k]);
        sample.ug.push_back(pair.ug()[k]);
        if (pair.uf()[k] != 0.0) ratios.push_back(-pair.ug()[k] / pair.uf()[k]);
        skip = stride;
      }
      --skip;
    }
    samples.push_back(std::move(sample));
  }
  if (ratios.empty()) return s_ls;

  std::vector<double> candidates{s_ls};
  std::sort(ratios.begin(), ratios.end());
  for (std::size_t c = 1; c <= kStartCandidates; ++c) {
    const std::size_t at = c * ratios.size() / (kStartCandidates + 1);
    candidates.push_back(ratios[std::min(at, ratios.size() - 1)]);
  }

  std::vector<double> abs_e;
  auto score = [&](double s) {
    double total = 0.0;
    for (const Sample& sample : samples) {
      const double norm = sample.pair->essential_norm(s);
      if (!(norm > 0.0)) return std::numeric_limits<double>::infinity();
      abs_e.resize(sample.uf.size());
      for (std::size_t k = 0; k < abs_e.size(); ++k) abs_e[k] = std::abs(s * sample.uf[k] + sample.ug[k]);
      const auto mid = abs_e.begin() + static_cast<std::ptrdiff_t>(abs_e.size() / 2);
      std::nth_element(abs_e.begin(), mid, abs_e.end());
      total += *mid / norm;
    }
    return total;
  };
  double best = s_ls;
  double best_score = score(s_ls);
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const double sc = score(candidates[c]);
    if (sc < best_score) {
      best_score = sc;
      best = candidates[c];
    }
  }
  return best;
}

ScaleEstimate solve_scale_robust(std::span<const PairSystem> pairs, const SolverConfig& config) {
  config.validate();

  std::vector<RowMask> eligible(pairs.size());
  std::mt19937_64 rng(config.rng_seed);
  std::bernoulli_distribution draw(config.sample_fraction);
  std::size_t eligible_rows = 0;
  std::vector<std::size_t> eligible_count(pairs.size(), 0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    RowMask& mask = eligible[p];
    mask.assign(pairs[p].size(), 1);
    if (config.sample_fraction < 1.0) {
      for (auto& v : mask) v = draw(rng) ? 1 : 0;
    }
    const std::size_t n = mask_count(mask);
    if (n < config.min_correspondences_per_pair) {
      std::fill(mask.begin(), mask.end(), 0);
      continue;
    }
    eligible_count[p] = n;
    eligible_rows += n;
  }
  if (eligible_rows == 0) {
    throw DegenerateSystem("no pair has at least " +
                           std::to_string(config.min_correspondences_per_pair) +
                           " correspondences");
  }

  ScaleEstimate est = solve_scale(pairs, eligible);
  est.s = least_median_start(pairs, eligible, est.s);
  std::vector<ThresholdPlan> plans(pairs.size());
  if (!config.residual_threshold) {
    for (std::size_t p = 0; p < pairs.size(); ++p) plans[p] = plan_threshold(pairs[p], eligible[p]);
  }
  std::vector<RowMask> current = eligible;
  std::vector<RowMask> next = eligible;
  std::vector<kernels::Moments> kept_moments(pairs.size());
  int round = 0;
  bool converged = false;
  while (round < config.ransac_iterations) {
    ++round;
    std::size_t kept = 0;
    bool changed = false;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      RowMask& mask = next[p];
      kept_moments[p] = kernels::Moments{};
      if (eligible_count[p] == 0) {
        std::fill(mask.begin(), mask.end(), 0);
      } else {
        const double threshold =
            config.residual_threshold
                ? *config.residual_threshold
                : planned_threshold(plans[p], est.s, config.mad_multiplier);
        kept_moments[p] = kernels::threshold_mask(pairs[p].uf(), pairs[p].ug(), est.s, threshold,
                                                  eligible[p], mask);
        kept += kept_moments[p].count;
      }
      changed = changed || mask != current[p];
    }
    if (kept == 0) {
      throw AllRejected("all correspondences rejected at s = " + std::to_string(est.s));
    }
    if (!changed) {
      converged = true;
      break;
    }
    std::swap(current, next);
    est = solve_from_moments(pairs, kept_moments);
  }

  est.rounds = round;
  est.converged = converged || config.ransac_iterations == 0;
  est.inlier_fraction =
      static_cast<double>(est.correspondences_used) / static_cast<double>(eligible_rows);
  return est;
}

}  // namespace scalemm
