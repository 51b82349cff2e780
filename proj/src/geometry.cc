#include "scalemm/geometry.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/SVD>

namespace scalemm {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

bool is_rotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  const Mat3 gram = R.transpose() * R - Mat3::Identity();
  if (gram.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 orthonormalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

RigidTransform RigidTransform::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("quaternion has zero or non-finite norm");
  }
  return {q.normalized().toRotationMatrix(), t};
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Eigen::Quaterniond RigidTransform::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  // Canonical hemisphere keeps serialized output stable.
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -rt * translation_};
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

RigidTransform rotation_about_z(double radians, const Vec3& translation) {
  return {Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix(), translation};
}

RelativePose relative_pose(const RigidTransform& t_i, const RigidTransform& t_j, int i, int j) {
  const RigidTransform rel = compose(t_j, t_i.inverse());
  return {rel.rotation(), rel.translation(), i, j};
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return k;
}

void Intrinsics::validate() const {
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw std::invalid_argument("intrinsics contain non-finite values");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("focal lengths must be positive");
  }
}

NormalizedPoint normalize(const Vec2& pixel, const Intrinsics& k) {
  return {(pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy};
}

Vec2 denormalize(const NormalizedPoint& p, const Intrinsics& k) {
  return {k.fx * p.x + k.cx, k.fy * p.y + k.cy};
}

std::string_view to_string(ScalePlacement placement) {
  switch (placement) {
    case ScalePlacement::kMotion:
      return "1";
    case ScalePlacement::kRig:
      return "2";
  }
  return "?";
}

void StereoRig::validate() const {
  if (!extrinsic.is_valid()) throw std::invalid_argument("rig rotation is not a rotation");
  if (!extrinsic.translation().allFinite()) {
    throw std::invalid_argument("rig translation is not finite");
  }
  if (!(baseline() > 0.0)) throw std::invalid_argument("rig baseline must be positive");
  secondary.validate();
}

RigidTransform secondary_pose(const RigidTransform& primary, const StereoRig& rig, double s,
                              ScalePlacement placement) {
  const Mat3& rs = rig.extrinsic.rotation();
  const Vec3& ts = rig.extrinsic.translation();
  const Mat3 r = rs * primary.rotation();
  if (placement == ScalePlacement::kMotion) {
    return {r, s * (rs * primary.translation()) + ts};
  }
  return {r, rs * primary.translation() + s * ts};
}

namespace {

Vec9 stack_cross(const Vec3& v, const Mat3& a) {
  Vec9 out;
  for (int k = 0; k < 3; ++k) out.segment<3>(3 * k) = v.cross(a.col(k));
  return out;
}

}  // namespace

PairCoefficients pair_coefficients(const RelativePose& rel, const StereoRig& rig,
                                   ScalePlacement placement) {
  const Mat3& rs = rig.extrinsic.rotation();
  const Vec3& ts = rig.extrinsic.translation();

  PairCoefficients out;
  out.placement = placement;
  out.A = rs * rel.rotation * rs.transpose();
  const Vec3 motion = rs * rel.translation;
  const Vec3 lever = (Mat3::Identity() - out.A) * ts;
  if (placement == ScalePlacement::kMotion) {
    out.b = motion;
    out.c = lever;
  } else {
    out.b = lever;
    out.c = motion;
  }
  out.f = stack_cross(out.b, out.A);
  out.g = stack_cross(out.c, out.A);
  return out;
}

Mat3 essential_matrix(const PairCoefficients& coeffs, double s) {
  return skew(s * coeffs.b + coeffs.c) * coeffs.A;
}

Mat3 unstack_columns(const Vec9& v) {
  Mat3 m;
  for (int k = 0; k < 3; ++k) m.col(k) = v.segment<3>(3 * k);
  return m;
}

Vec9 monomial_row(const NormalizedPoint& pi, const NormalizedPoint& pj) {
  Vec9 u;
  u << pi.x * pj.x, pi.x * pj.y, pi.x,
       pi.y * pj.x, pi.y * pj.y, pi.y,
       pj.x, pj.y, 1.0;
  return u;
}

PairObservation::PairObservation(int source, int target, std::vector<double> xi,
                                 std::vector<double> yi, std::vector<double> xj,
                                 std::vector<double> yj)
    : source_(source),
      target_(target),
      xi_(std::move(xi)),
      yi_(std::move(yi)),
      xj_(std::move(xj)),
      yj_(std::move(yj)) {
  if (yi_.size() != xi_.size() || xj_.size() != xi_.size() || yj_.size() != xi_.size()) {
    throw std::invalid_argument("pair observation coordinate arrays differ in length");
  }
}

PairObservation::PairObservation(int source, int target, std::span<const NormalizedPoint> points_i,
                                 std::span<const NormalizedPoint> points_j)
    : source_(source), target_(target) {
  if (points_i.size() != points_j.size()) {
    throw std::invalid_argument("pair observation point lists differ in length");
  }
  const std::size_t n = points_i.size();
  xi_.resize(n);
  yi_.resize(n);
  xj_.resize(n);
  yj_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    xi_[k] = points_i[k].x;
    yi_[k] = points_i[k].y;
    xj_[k] = points_j[k].x;
    yj_[k] = points_j[k].y;
  }
}

Eigen::Matrix<double, Eigen::Dynamic, 9> PairObservation::design_matrix() const {
  Eigen::Matrix<double, Eigen::Dynamic, 9> u(static_cast<Eigen::Index>(size()), 9);
  for (std::size_t k = 0; k < size(); ++k) u.row(static_cast<Eigen::Index>(k)) = monomials(k);
  return u;
}

PairObservation PairObservation::subset(std::span<const std::uint8_t> keep) const {
  if (keep.size() != size()) throw std::invalid_argument("mask length differs from pair size");
  std::vector<double> xi, yi, xj, yj;
  for (std::size_t k = 0; k < size(); ++k) {
    if (!keep[k]) continue;
    xi.push_back(xi_[k]);
    yi.push_back(yi_[k]);
    xj.push_back(xj_[k]);
    yj.push_back(yj_[k]);
  }
  return {source_, target_, std::move(xi), std::move(yi), std::move(xj), std::move(yj)};
}

}  // namespace scalemm
