#include <cmath>
#include <stdexcept>
#include <string>

#include "scalemm/dataset.h"
#include "scalemm/errors.h"

namespace scalemm {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::string pair_name(const PairKey& key) {
  return "(" + std::to_string(key.first) + "," + std::to_string(key.second) + ")";
}

Mat3 small_rotation(std::mt19937_64& rng, double max_deg) {
  if (max_deg <= 0.0) return Mat3::Identity();
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 axis(n(rng), n(rng), n(rng));
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  std::uniform_real_distribution<double> angle(-max_deg, max_deg);
  return Eigen::AngleAxisd(angle(rng) * kPi / 180.0, axis.normalized()).toRotationMatrix();
}

}  // namespace

double GridGroundTruth::distance(int i, int j) const {
  const GridCell& a = cells.at(i);
  const GridCell& b = cells.at(j);
  return pitch * std::hypot(static_cast<double>(a.row - b.row), static_cast<double>(a.col - b.col));
}

std::vector<int> GridGroundTruth::ids() const {
  std::vector<int> out;
  out.reserve(cells.size());
  for (const auto& [id, cell] : cells) out.push_back(id);
  return out;
}

void Dataset::validate() const {
  try {
    rig.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("rig: ") + e.what());
  }
  for (const auto& [id, pose] : poses) {
    if (!pose.is_valid(1e-6) || !pose.translation().allFinite()) {
      throw ValidationError("pose " + std::to_string(id) + " is not a rigid transform");
    }
  }
  for (const auto& [key, matches] : correspondences) {
    if (!poses.count(key.first) || !poses.count(key.second)) {
      throw ValidationError("correspondence pair " + pair_name(key) + " references a viewpoint with no pose");
    }
    if (key.first == key.second) {
      throw ValidationError("correspondence pair " + pair_name(key) + " pairs a view with itself");
    }
    if (matches.empty()) {
      throw ValidationError("correspondence pair " + pair_name(key) + " has no matches");
    }
    for (const PixelMatch& m : matches) {
      if (!m.pixel_i.allFinite() || !m.pixel_j.allFinite()) {
        throw ValidationError("correspondence pair " + pair_name(key) + " has a non-finite pixel");
      }
    }
  }
  if (ground_truth) {
    if (!(ground_truth->pitch > 0.0) || !std::isfinite(ground_truth->pitch)) {
      throw ValidationError("grid pitch must be positive");
    }
    for (const auto& [id, cell] : ground_truth->cells) {
      if (!poses.count(id)) {
        throw ValidationError("grid viewpoint " + std::to_string(id) + " has no pose");
      }
    }
  }
}

bool same_dataset(const Dataset& a, const Dataset& b, double rotation_tol) {
  auto same_rotation = [rotation_tol](const Mat3& x, const Mat3& y) {
    return (x - y).cwiseAbs().maxCoeff() <= rotation_tol;
  };
  if (a.units != b.units || a.up_to_scale != b.up_to_scale) return false;
  if (a.poses.size() != b.poses.size()) return false;
  for (const auto& [id, pose] : a.poses) {
    const auto it = b.poses.find(id);
    if (it == b.poses.end()) return false;
    if (!same_rotation(pose.rotation(), it->second.rotation()) ||
        pose.translation() != it->second.translation()) {
      return false;
    }
  }
  if (!same_rotation(a.rig.extrinsic.rotation(), b.rig.extrinsic.rotation()) ||
      a.rig.extrinsic.translation() != b.rig.extrinsic.translation() ||
      !(a.rig.secondary == b.rig.secondary)) {
    return false;
  }
  return a.correspondences == b.correspondences && a.ground_truth == b.ground_truth;
}

void GridSceneConfig::validate() const {
  if (rows < 1 || cols < 1 || rows * cols < 2) throw std::invalid_argument("grid needs at least two cells");
  if (!(pitch > 0.0)) throw std::invalid_argument("pitch must be positive");
  if (!(baseline > 0.0)) throw std::invalid_argument("baseline must be positive");
  if (!is_rotation(rig_rotation, 1e-9)) throw std::invalid_argument("rig_rotation is not a rotation");
  intrinsics.validate();
  if (image_width <= 0 || image_height <= 0) throw std::invalid_argument("image size must be positive");
  if (n_points < 8) throw std::invalid_argument("n_points must be at least 8");
  if (!(depth_min > 0.0) || !(depth_max >= depth_min)) throw std::invalid_argument("bad depth range");
  if (!(pixel_noise >= 0.0)) throw std::invalid_argument("pixel_noise must be non-negative");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) {
    throw std::invalid_argument("outlier_fraction must lie in [0, 1)");
  }
  if (!(sfm_scale > 0.0)) throw std::invalid_argument("sfm_scale must be positive");
  if (min_shared < 8) throw std::invalid_argument("min_shared must be at least 8");
}

Dataset generate_grid_dataset(const GridSceneConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, config.pixel_noise);

  Dataset ds;
  ds.units = "mm";
  ds.up_to_scale = true;
  ds.rig.extrinsic = RigidTransform(config.rig_rotation, Vec3(config.baseline, 0.0, 0.0));
  ds.rig.secondary = config.intrinsics;

  GridGroundTruth gt;
  gt.pitch = config.pitch;

  // Metric primary poses. Grid cameras sit at (col, row) * pitch in the
  // z = 0 plane and look roughly along +z.
  std::vector<RigidTransform> metric;
  int id = 0;
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      const Vec3 center(c * config.pitch, r * config.pitch, 0.0);
      const Mat3 rot = small_rotation(rng, config.rotation_jitter_deg);
      metric.emplace_back(rot, -rot * center);
      gt.cells[id++] = {r, c};
    }
  }
  const double span_x = (config.cols - 1) * config.pitch;
  const double span_y = (config.rows - 1) * config.pitch;
  for (std::size_t k = 0; k < config.supplementary_views; ++k) {
    const Vec3 center((unit(rng) * 1.5 - 0.25) * std::max(span_x, config.pitch),
                      (unit(rng) * 1.5 - 0.25) * std::max(span_y, config.pitch),
                      (unit(rng) - 0.5) * config.pitch);
    const Mat3 rot = small_rotation(rng, 2.0 * config.rotation_jitter_deg);
    metric.emplace_back(rot, -rot * center);
  }

  // Points are back-projected from a virtual camera at the grid center so
  // that most of them are seen by every view.
  const Intrinsics& k = config.intrinsics;
  const Vec3 mid(0.5 * span_x, 0.5 * span_y, 0.0);
  std::vector<Vec3> points(config.n_points);
  for (Vec3& p : points) {
    const double u = unit(rng) * config.image_width;
    const double v = unit(rng) * config.image_height;
    const double z = config.depth_min + unit(rng) * (config.depth_max - config.depth_min);
    p = mid + Vec3((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
  }

  const std::size_t n_views = metric.size();
  std::vector<std::vector<Vec2>> pixels(n_views, std::vector<Vec2>(points.size()));
  std::vector<std::vector<std::uint8_t>> seen(n_views, std::vector<std::uint8_t>(points.size(), 0));
  for (std::size_t v = 0; v < n_views; ++v) {
    const RigidTransform secondary = ds.rig.extrinsic * metric[v];
    for (std::size_t l = 0; l < points.size(); ++l) {
      const Vec3 xc = secondary.apply(points[l]);
      if (!(xc.z() > 0.0)) continue;
      Vec2 px(k.fx * xc.x() / xc.z() + k.cx, k.fy * xc.y() / xc.z() + k.cy);
      if (px.x() < 0.0 || px.y() < 0.0 || px.x() >= config.image_width ||
          px.y() >= config.image_height) {
        continue;
      }
      if (config.pixel_noise > 0.0) px += Vec2(noise(rng), noise(rng));
      if (config.outlier_fraction > 0.0 && unit(rng) < config.outlier_fraction) {
        px = Vec2(unit(rng) * config.image_width, unit(rng) * config.image_height);
      }
      pixels[v][l] = px;
      seen[v][l] = 1;
    }
  }

  for (std::size_t v = 0; v < n_views; ++v) {
    ds.poses[static_cast<int>(v)] =
        RigidTransform(metric[v].rotation(), config.sfm_scale * metric[v].translation());
  }
  for (std::size_t i = 0; i < n_views; ++i) {
    for (std::size_t j = i + 1; j < n_views; ++j) {
      std::vector<PixelMatch> matches;
      for (std::size_t l = 0; l < points.size(); ++l) {
        if (seen[i][l] && seen[j][l]) matches.push_back({pixels[i][l], pixels[j][l]});
      }
      if (matches.size() < config.min_shared) continue;
      ds.correspondences[{static_cast<int>(i), static_cast<int>(j)}] = std::move(matches);
    }
  }
  ds.ground_truth = std::move(gt);
  ds.validate();
  return ds;
}

}  // namespace scalemm
