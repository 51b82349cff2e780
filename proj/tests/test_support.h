#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "scalemm/geometry.h"

namespace scalemm::testing {

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline RigidTransform random_transform(std::mt19937_64& rng, double scale = 1.0) {
  return {random_rotation(rng), random_vec(rng, scale)};
}

inline Mat3 rot_z_deg(double deg) {
  return Eigen::AngleAxisd(deg * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix();
}

// Camera at `center` looking at the origin, world-to-camera.
inline RigidTransform looking_at_origin(const Vec3& center, double roll = 0.0) {
  const Vec3 z = (-center).normalized();
  Vec3 up = std::abs(z.z()) > 0.9 ? Vec3::UnitY() : Vec3::UnitZ();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  r = Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix() * r;
  return {r, -r * center};
}

inline NormalizedPoint project_normalized(const RigidTransform& cam, const Vec3& x) {
  const Vec3 c = cam.apply(x);
  return {c.x() / c.z(), c.y() / c.z()};
}

}  // namespace scalemm::testing
