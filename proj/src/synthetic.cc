#include "scalemm/synthetic.h"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "parallel.h"
#include "scalemm/errors.h"
#include "scalemm/kernels.h"
#include "text_format.h"

namespace scalemm {
namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

// World-to-camera rotation whose optical axis points from `center` to `target`,
// rolled by `roll` about that axis.
Mat3 look_at(const Vec3& center, const Vec3& target, double roll) {
  const Vec3 z = (target - center).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(z.dot(up)) > 0.9) up = Vec3::UnitY();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  const Mat3 rz = Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix();
  return rz * r;
}

// x and y are already divided by the depth z.
bool in_view(double x, double y, double z, double tan_half_fov) {
  if (!(z > 0.0)) return false;
  if (!std::isfinite(tan_half_fov)) return true;
  return std::hypot(x, y) <= tan_half_fov;
}

std::size_t shared_count(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < a.size(); ++l) n += (a[l] & b[l]) ? 1 : 0;
  return n;
}

}  // namespace

void SceneConfig::validate() const {
  if (!(cube_side > 0.0)) throw std::invalid_argument("cube_side must be positive");
  if (!(baseline_d > 0.0)) throw std::invalid_argument("baseline_d must be positive");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be non-negative");
  if (n_points < 8) throw std::invalid_argument("n_points must be at least 8");
  if (n_cameras < 2) throw std::invalid_argument("n_cameras must be at least 2");
  if (min_shared < 8) throw std::invalid_argument("min_shared must be at least 8");
  if (!is_rotation(rig_rotation, 1e-9)) throw std::invalid_argument("rig_rotation is not a rotation");
  if (!(shell_inner > 0.0) || !(shell_outer >= shell_inner)) {
    throw std::invalid_argument("shell radii must satisfy 0 < inner <= outer");
  }
  if (fov_degrees && !(*fov_degrees > 0.0 && *fov_degrees < 180.0)) {
    throw std::invalid_argument("fov_degrees must lie in (0, 180)");
  }
  if (max_placement_retries < 1) throw std::invalid_argument("max_placement_retries must be positive");
}

std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

SyntheticScene generate_scene(const SceneConfig& config, std::mt19937_64& rng) {
  config.validate();
  SyntheticScene scene;
  scene.rig.extrinsic = RigidTransform(config.rig_rotation, Vec3(config.baseline_d, 0.0, 0.0));

  const double half = 0.5 * config.cube_side;
  std::uniform_real_distribution<double> coord(-half, half);
  scene.points.resize(config.n_points);
  for (Vec3& p : scene.points) p = Vec3(coord(rng), coord(rng), coord(rng));

  const double tan_half_fov = config.fov_degrees
                                  ? std::tan(0.5 * *config.fov_degrees * kPi / 180.0)
                                  : std::numeric_limits<double>::infinity();
  const double half_diag = half * std::sqrt(3.0);
  const double r_in = config.shell_inner * half_diag;
  const double r_out = config.shell_outer * half_diag;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> roll(-kPi, kPi);
  std::normal_distribution<double> noise(0.0, config.noise_sigma);

  const std::size_t n = config.n_points;
  std::vector<double> px(n), py(n), pz(n);
  for (std::size_t l = 0; l < n; ++l) {
    px[l] = scene.points[l].x();
    py[l] = scene.points[l].y();
    pz[l] = scene.points[l].z();
  }
  std::vector<double> cx(n), cy(n), cz(n);

  for (std::size_t k = 0; k < config.n_cameras; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_placement_retries && !placed; ++attempt) {
      const double r3 = r_in * r_in * r_in + unit(rng) * (r_out * r_out * r_out - r_in * r_in * r_in);
      const Vec3 center = std::cbrt(r3) * random_unit(rng);
      const Mat3 rot = look_at(center, Vec3::Zero(), roll(rng));
      const RigidTransform primary(rot, -rot * center);
      const RigidTransform secondary = scene.rig.extrinsic * primary;

      kernels::project_points(primary.rotation(), primary.translation(), px, py, pz, cx, cy, cz);
      std::vector<std::uint8_t> vis(n, 0);
      for (std::size_t l = 0; l < n; ++l) vis[l] = in_view(cx[l], cy[l], cz[l], tan_half_fov);
      kernels::project_points(secondary.rotation(), secondary.translation(), px, py, pz, cx, cy, cz);
      std::vector<NormalizedPoint> obs(n);
      std::size_t count = 0;
      for (std::size_t l = 0; l < n; ++l) {
        vis[l] = vis[l] && in_view(cx[l], cy[l], cz[l], tan_half_fov);
        if (!vis[l]) continue;
        ++count;
        obs[l] = {cx[l], cy[l]};
      }
      if (count < config.min_visible) continue;

      scene.poses_primary.push_back(primary);
      scene.poses_secondary.push_back(secondary);
      scene.observations.push_back(std::move(obs));
      scene.visible.push_back(std::move(vis));
      placed = true;
    }
    if (!placed) {
      throw PlacementFailure("camera " + std::to_string(k) + " sees fewer than " +
                             std::to_string(config.min_visible) + " points after " +
                             std::to_string(config.max_placement_retries) + " placements");
    }
  }

  // Noise is drawn after placement so that it does not perturb the geometry
  // stream when sigma changes.
  if (config.noise_sigma > 0.0) {
    for (std::size_t k = 0; k < scene.observations.size(); ++k) {
      for (std::size_t l = 0; l < n; ++l) {
        if (!scene.visible[k][l]) continue;
        scene.observations[k][l].x += noise(rng);
        scene.observations[k][l].y += noise(rng);
      }
    }
  }
  return scene;
}

SyntheticScene generate_scene(const SceneConfig& config) {
  std::mt19937_64 rng = trial_rng(config.rng_seed, 0);
  return generate_scene(config, rng);
}

std::vector<PairObservation> scene_pairs(const SyntheticScene& scene, std::size_t min_shared) {
  std::vector<PairObservation> out;
  const std::size_t cams = scene.poses_primary.size();
  for (std::size_t i = 0; i < cams; ++i) {
    for (std::size_t j = i + 1; j < cams; ++j) {
      if (shared_count(scene.visible[i], scene.visible[j]) < min_shared) continue;
      std::vector<double> xi, yi, xj, yj;
      for (std::size_t l = 0; l < scene.points.size(); ++l) {
        if (!(scene.visible[i][l] && scene.visible[j][l])) continue;
        xi.push_back(scene.observations[i][l].x);
        yi.push_back(scene.observations[i][l].y);
        xj.push_back(scene.observations[j][l].x);
        yj.push_back(scene.observations[j][l].y);
      }
      out.emplace_back(static_cast<int>(i), static_cast<int>(j), std::move(xi), std::move(yi),
                       std::move(xj), std::move(yj));
    }
  }
  return out;
}

std::vector<PairSystem> build_pair_systems(const SyntheticScene& scene, std::size_t min_shared) {
  std::vector<PairSystem> out;
  const std::size_t cams = scene.poses_primary.size();
  const std::size_t n = scene.points.size();
  std::vector<double> xi, yi, xj, yj;
  xi.reserve(n);
  yi.reserve(n);
  xj.reserve(n);
  yj.reserve(n);
  for (std::size_t i = 0; i < cams; ++i) {
    for (std::size_t j = i + 1; j < cams; ++j) {
      xi.clear();
      yi.clear();
      xj.clear();
      yj.clear();
      const auto& vi = scene.visible[i];
      const auto& vj = scene.visible[j];
      for (std::size_t l = 0; l < n; ++l) {
        if (!(vi[l] && vj[l])) continue;
        xi.push_back(scene.observations[i][l].x);
        yi.push_back(scene.observations[i][l].y);
        xj.push_back(scene.observations[j][l].x);
        yj.push_back(scene.observations[j][l].y);
      }
      if (xi.size() < min_shared) continue;
      const RelativePose rel = relative_pose(scene.poses_primary[i], scene.poses_primary[j],
                                             static_cast<int>(i), static_cast<int>(j));
      const PairCoefficients coeffs = pair_coefficients(rel, scene.rig, ScalePlacement::kMotion);
      std::vector<double> uf(xi.size()), ug(xi.size());
      kernels::epipolar_forms(kernels::EpipolarRows{xi, yi, xj, yj}, coeffs.f, coeffs.g, uf, ug);
      out.emplace_back(static_cast<int>(i), static_cast<int>(j), ScalePlacement::kMotion,
                       std::move(uf), std::move(ug),
                       Vec3(coeffs.f.squaredNorm(), coeffs.f.dot(coeffs.g), coeffs.g.squaredNorm()));
    }
  }
  return out;
}

Dataset scene_dataset(const SyntheticScene& scene, std::size_t min_shared) {
  Dataset ds;
  ds.units = "scene";
  ds.up_to_scale = true;
  ds.rig.extrinsic = scene.rig.extrinsic;
  ds.rig.secondary = Intrinsics{1.0, 1.0, 0.0, 0.0};
  for (std::size_t k = 0; k < scene.poses_primary.size(); ++k) {
    ds.poses[static_cast<int>(k)] = scene.poses_primary[k];
  }
  for (const PairObservation& p : scene_pairs(scene, min_shared)) {
    std::vector<PixelMatch>& matches = ds.correspondences[{p.source(), p.target()}];
    matches.reserve(p.size());
    for (std::size_t r = 0; r < p.size(); ++r) {
      matches.push_back({Vec2(p.xi()[r], p.yi()[r]), Vec2(p.xj()[r], p.yj()[r])});
    }
  }
  return ds;
}

void TrialStats::recompute() {
  std::vector<double> finite;
  finite.reserve(values.size());
  failures = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      finite.push_back(v);
    } else {
      ++failures;
    }
  }
  if (finite.empty()) {
    mean = std::numeric_limits<double>::quiet_NaN();
    sd = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
  double sq = 0.0;
  for (double v : finite) sq += (v - mean) * (v - mean);
  sd = finite.size() > 1 ? std::sqrt(sq / static_cast<double>(finite.size() - 1)) : 0.0;
}

double reported_value(double s, ScalePlacement placement) {
  return placement == ScalePlacement::kMotion ? 1.0 / s : s;
}

std::vector<TrialStats> run_trials_both(const SceneConfig& config, const SolverConfig& solver) {
  config.validate();
  solver.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> alg1(config.trials, nan), alg2(config.trials, nan);

  detail::parallel_for(config.trials, config.threads, [&](std::size_t t) {
    std::mt19937_64 rng = trial_rng(config.rng_seed, t);
    SyntheticScene scene;
    try {
      scene = generate_scene(config, rng);
    } catch (const PlacementFailure&) {
      return;
    }
    std::vector<PairSystem> systems = build_pair_systems(scene, config.min_shared);
    SolverConfig sc = solver;
    sc.rng_seed = solver.rng_seed + t;
    try {
      alg1[t] = reported_value(solve_scale_robust(systems, sc).s, ScalePlacement::kMotion);
    } catch (const Error&) {
    }
    for (PairSystem& p : systems) p = p.swapped();
    try {
      alg2[t] = reported_value(solve_scale_robust(systems, sc).s, ScalePlacement::kRig);
    } catch (const Error&) {
    }
  });

  std::vector<TrialStats> out(2);
  out[0].placement = ScalePlacement::kMotion;
  out[0].values = std::move(alg1);
  out[1].placement = ScalePlacement::kRig;
  out[1].values = std::move(alg2);
  for (TrialStats& st : out) {
    st.baseline_d = config.baseline_d;
    st.sigma_n = config.noise_sigma;
    st.recompute();
  }
  return out;
}

TrialStats run_trials(const SceneConfig& config, ScalePlacement placement,
                      const SolverConfig& solver) {
  std::vector<TrialStats> both = run_trials_both(config, solver);
  return placement == ScalePlacement::kMotion ? both[0] : both[1];
}

std::vector<TrialStats> baseline_sweep(const SceneConfig& base, const std::vector<double>& d_values,
                                       const std::vector<ScalePlacement>& placements,
                                       const SolverConfig& solver) {
  if (d_values.empty()) throw std::invalid_argument("d_values is empty");
  if (placements.empty()) throw std::invalid_argument("no placement requested");
  for (double d : d_values) {
    if (!(d > 0.0)) throw std::invalid_argument("baseline values must be positive");
  }
  std::vector<TrialStats> out;
  for (double d : d_values) {
    SceneConfig config = base;
    config.baseline_d = d;
    const std::vector<TrialStats> both = run_trials_both(config, solver);
    for (ScalePlacement p : placements) {
      out.push_back(p == ScalePlacement::kMotion ? both[0] : both[1]);
    }
  }
  return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi > 0.0)) throw std::invalid_argument("logspace bounds must be positive");
  if (n == 0) return {};
  if (n == 1) return {lo};
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = std::pow(10.0, a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::string trials_csv(const std::vector<TrialStats>& stats) {
  std::string out = "algorithm,d,sigma_n,trial,value\n";
  for (const TrialStats& st : stats) {
    for (std::size_t t = 0; t < st.values.size(); ++t) {
      out += std::string(to_string(st.placement)) + ',' + detail::format_double(st.baseline_d) +
             ',' + detail::format_double(st.sigma_n) + ',' + std::to_string(t) + ',' +
             detail::format_double(st.values[t]) + '\n';
    }
  }
  return out;
}

std::string summary_csv(const std::vector<TrialStats>& stats) {
  std::string out = "algorithm,d,mean,sd,failures\n";
  for (const TrialStats& st : stats) {
    out += std::string(to_string(st.placement)) + ',' + detail::format_double(st.baseline_d) + ',' +
           detail::format_double(st.mean) + ',' + detail::format_double(st.sd) + ',' +
           std::to_string(st.failures) + '\n';
  }
  return out;
}

}  // namespace scalemm
