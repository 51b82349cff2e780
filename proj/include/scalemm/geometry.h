#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scalemm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

Mat3 skew(const Vec3& v);

// True when R is orthonormal with determinant +1, elementwise within tol.
bool is_rotation(const Mat3& R, double tol = 1e-9);

// Closest rotation in the Frobenius sense.
Mat3 orthonormalize(const Mat3& R);

// World-to-camera rigid motion: X_cam = R * X_world + t.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  // The quaternion is normalized before conversion.
  static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);
  static RigidTransform from_matrix(const Mat4& m);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  // Optical center in world coordinates.
  Vec3 center() const { return -rotation_.transpose() * translation_; }
  Mat4 matrix() const;
  RigidTransform inverse() const;

  bool is_valid(double tol = 1e-9) const { return is_rotation(rotation_, tol); }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

RigidTransform rotation_about_z(double radians, const Vec3& translation = Vec3::Zero());

struct RelativePose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int source_index = 0;
  int target_index = 0;

  RigidTransform as_transform() const { return {rotation, translation}; }
};

// Blocks of T_j * T_i^-1.
RelativePose relative_pose(const RigidTransform& t_i, const RigidTransform& t_j, int i = 0,
                           int j = 0);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  Eigen::Vector4d as_vector() const { return {fx, fy, cx, cy}; }
  static Intrinsics from_vector(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
  // Throws std::invalid_argument unless fx, fy > 0 and all fields are finite.
  void validate() const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;

  Vec3 homogeneous() const { return {x, y, 1.0}; }
};

NormalizedPoint normalize(const Vec2& pixel, const Intrinsics& k);
Vec2 denormalize(const NormalizedPoint& p, const Intrinsics& k);

// Where the unknown scale enters the model. kMotion multiplies the relative
// motion translation of the primary camera; kRig multiplies the rig baseline.
enum class ScalePlacement : int { kMotion = 1, kRig = 2 };

std::string_view to_string(ScalePlacement placement);

struct StereoRig {
  RigidTransform extrinsic;  // primary camera frame -> secondary camera frame
  Intrinsics secondary;

  double baseline() const { return extrinsic.translation().norm(); }
  void validate() const;
};

// Pose of the secondary camera given a primary pose and a scale hypothesis.
RigidTransform secondary_pose(const RigidTransform& primary, const StereoRig& rig, double s,
                              ScalePlacement placement);

// Affine-in-s decomposition of the secondary-camera relative motion:
// E(s) = [s*b + c]_x A, flattened as u_k . (s*f + g).
struct PairCoefficients {
  Mat3 A = Mat3::Identity();
  Vec3 b = Vec3::Zero();
  Vec3 c = Vec3::Zero();
  Vec9 f = Vec9::Zero();  // [b x a1; b x a2; b x a3]
  Vec9 g = Vec9::Zero();  // [c x a1; c x a2; c x a3]
  ScalePlacement placement = ScalePlacement::kMotion;
};

PairCoefficients pair_coefficients(const RelativePose& rel, const StereoRig& rig,
                                   ScalePlacement placement);

Mat3 essential_matrix(const PairCoefficients& coeffs, double s);

// Inverse of the f/g stacking: column k of the result is segment k.
Mat3 unstack_columns(const Vec9& v);

// Row of U for one correspondence:
// [xi*xj, xi*yj, xi, yi*xj, yi*yj, yi, xj, yj, 1].
Vec9 monomial_row(const NormalizedPoint& pi, const NormalizedPoint& pj);

// Correspondences between the secondary images of viewpoints i and j, stored
// as parallel coordinate arrays.
class PairObservation {
 public:
  PairObservation() = default;
  PairObservation(int source, int target, std::vector<double> xi, std::vector<double> yi,
                  std::vector<double> xj, std::vector<double> yj);
  PairObservation(int source, int target, std::span<const NormalizedPoint> points_i,
                  std::span<const NormalizedPoint> points_j);

  int source() const { return source_; }
  int target() const { return target_; }
  std::size_t size() const { return xi_.size(); }
  bool empty() const { return xi_.empty(); }

  std::span<const double> xi() const { return xi_; }
  std::span<const double> yi() const { return yi_; }
  std::span<const double> xj() const { return xj_; }
  std::span<const double> yj() const { return yj_; }

  NormalizedPoint point_i(std::size_t k) const { return {xi_[k], yi_[k]}; }
  NormalizedPoint point_j(std::size_t k) const { return {xj_[k], yj_[k]}; }
  Vec9 monomials(std::size_t k) const { return monomial_row(point_i(k), point_j(k)); }

  // The n x 9 matrix U. Materialized on demand.
  Eigen::Matrix<double, Eigen::Dynamic, 9> design_matrix() const;

  // Rows whose keep flag is nonzero, order preserved.
  PairObservation subset(std::span<const std::uint8_t> keep) const;

 private:
  int source_ = 0;
  int target_ = 0;
  std::vector<double> xi_, yi_, xj_, yj_;
};

}  // namespace scalemm
