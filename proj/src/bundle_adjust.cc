#include "scalemm/bundle_adjust.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "scalemm/errors.h"

namespace scalemm {
namespace {

constexpr double kMadToSigma = 1.4826;
constexpr double kPi = 3.14159265358979323846;

using CamMat = Eigen::Matrix<double, 5, 5>;
using CamVec = Eigen::Matrix<double, 5, 1>;
using CamLm = Eigen::Matrix<double, 5, 3>;

// Per-landmark blocks of the normal equations.
struct LandmarkBlock {
  Mat3 H = Mat3::Zero();
  Vec3 g = Vec3::Zero();
  CamLm H_cl = CamLm::Zero();
};

struct NormalEquations {
  CamMat H_cc = CamMat::Zero();
  CamVec g_c = CamVec::Zero();
  std::vector<LandmarkBlock> blocks;
};

// Camera-block Jacobian in the fixed order [s, fx, fy, cx, cy].
Eigen::Matrix<double, 2, 5> camera_jacobian(const ResidualJacobian& j) {
  Eigen::Matrix<double, 2, 5> out;
  out.col(0) = j.d_scale;
  out.rightCols<4>() = j.d_intrinsics;
  return out;
}

NormalEquations build_normal_equations(const BAProblem& problem, double sigma_r, double delta) {
  NormalEquations ne;
  ne.blocks.resize(problem.landmarks.size());
  const double inv_var = 1.0 / (sigma_r * sigma_r);
  for (std::size_t l = 0; l < problem.landmarks.size(); ++l) {
    LandmarkBlock& block = ne.blocks[l];
    for (std::size_t k = 0; k < problem.landmarks[l].track.size(); ++k) {
      ResidualJacobian j;
      try {
        j = residual_jacobian(problem, l, k);
      } catch (const BehindCamera&) {
        continue;
      }
      const double a = j.residual.squaredNorm() * inv_var;
      const double w = 2.0 * inv_var * huber_derivative(a, delta);
      const Eigen::Matrix<double, 2, 5> jc = camera_jacobian(j);
      ne.H_cc.noalias() += w * jc.transpose() * jc;
      ne.g_c.noalias() += w * jc.transpose() * j.residual;
      block.H.noalias() += w * j.d_position.transpose() * j.d_position;
      block.g.noalias() += w * j.d_position.transpose() * j.residual;
      block.H_cl.noalias() += w * jc.transpose() * j.d_position;
    }
  }
  return ne;
}

double squared(double v) { return v * v; }

}  // namespace

void BAProblem::validate() const {
  intrinsics.validate();
  if (!std::isfinite(s)) throw std::invalid_argument("scale is not finite");
  for (std::size_t l = 0; l < landmarks.size(); ++l) {
    const Landmark& lm = landmarks[l];
    if (lm.track.size() < 2) {
      throw std::invalid_argument("landmark " + std::to_string(l) + " has a track shorter than 2");
    }
    if (!lm.position.allFinite()) {
      throw std::invalid_argument("landmark " + std::to_string(l) + " position is not finite");
    }
    for (const TrackObservation& obs : lm.track) {
      if (obs.view >= poses.size()) {
        throw std::invalid_argument("landmark " + std::to_string(l) + " references view " +
                                    std::to_string(obs.view) + " with no pose");
      }
    }
  }
}

void BAConfig::validate() const {
  if (!(huber_delta > 0.0)) throw std::invalid_argument("huber_delta must be positive");
  if (sigma_r && !(*sigma_r > 0.0)) throw std::invalid_argument("sigma_r must be positive");
  if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
  if (!(gradient_tolerance > 0.0) || !(parameter_tolerance > 0.0)) {
    throw std::invalid_argument("tolerances must be positive");
  }
  if (!(lm_initial_damping > 0.0)) throw std::invalid_argument("lm_initial_damping must be positive");
  if (max_damping_retries <= 0) throw std::invalid_argument("max_damping_retries must be positive");
}

Vec3 transform_to_camera(const Vec3& x, const RigidTransform& pose, const RigidTransform& rig,
                         double s, ScalePlacement placement) {
  const Mat3& rs = rig.rotation();
  const Vec3 rotated = rs * (pose.rotation() * x);
  if (placement == ScalePlacement::kMotion) {
    return rotated + s * (rs * pose.translation()) + rig.translation();
  }
  return rotated + rs * pose.translation() + s * rig.translation();
}

Vec3 transform_to_camera(const Vec3& x, std::size_t view, const BAProblem& problem) {
  return transform_to_camera(x, problem.poses.at(view), problem.rig_extrinsic, problem.s,
                             problem.placement);
}

Vec2 project(const Vec3& x_cam, const Intrinsics& k) {
  if (!(x_cam.z() > kMinDepth)) {
    throw BehindCamera("point at depth " + std::to_string(x_cam.z()) + " is not projectable");
  }
  return {k.fx * x_cam.x() / x_cam.z() + k.cx, k.fy * x_cam.y() / x_cam.z() + k.cy};
}

Vec2 reprojection_residual(const BAProblem& problem, std::size_t landmark, std::size_t obs) {
  const Landmark& lm = problem.landmarks.at(landmark);
  const TrackObservation& o = lm.track.at(obs);
  return o.pixel - project(transform_to_camera(lm.position, o.view, problem), problem.intrinsics);
}

double huber(double a, double delta) {
  const double d2 = delta * delta;
  return a <= d2 ? a : 2.0 * delta * std::sqrt(a) - d2;
}

double huber_derivative(double a, double delta) {
  return a <= delta * delta ? 1.0 : delta / std::sqrt(a);
}

CostSummary evaluate_cost(const BAProblem& problem, double sigma_r, double huber_delta) {
  CostSummary out;
  const double inv_var = 1.0 / (sigma_r * sigma_r);
  for (std::size_t l = 0; l < problem.landmarks.size(); ++l) {
    for (std::size_t k = 0; k < problem.landmarks[l].track.size(); ++k) {
      try {
        const Vec2 r = reprojection_residual(problem, l, k);
        out.cost += huber(r.squaredNorm() * inv_var, huber_delta);
        ++out.observations;
      } catch (const BehindCamera&) {
        ++out.behind_camera;
      }
    }
  }
  return out;
}

double cost(const BAProblem& problem, const BAConfig& config) {
  if (!config.sigma_r) throw std::invalid_argument("cost() needs an explicit sigma_r");
  return evaluate_cost(problem, *config.sigma_r, config.huber_delta).cost;
}

double estimate_sigma_r(const BAProblem& problem, double min_sigma) {
  std::vector<double> comps;
  for (std::size_t l = 0; l < problem.landmarks.size(); ++l) {
    for (std::size_t k = 0; k < problem.landmarks[l].track.size(); ++k) {
      try {
        const Vec2 r = reprojection_residual(problem, l, k);
        comps.push_back(std::abs(r.x()));
        comps.push_back(std::abs(r.y()));
      } catch (const BehindCamera&) {
      }
    }
  }
  if (comps.empty()) return min_sigma;
  const auto mid = comps.begin() + static_cast<std::ptrdiff_t>(comps.size() / 2);
  std::nth_element(comps.begin(), mid, comps.end());
  return std::max(kMadToSigma * *mid, min_sigma);
}

ResidualJacobian residual_jacobian(const BAProblem& problem, std::size_t landmark,
                                   std::size_t obs) {
  const Landmark& lm = problem.landmarks.at(landmark);
  const TrackObservation& o = lm.track.at(obs);
  const RigidTransform& pose = problem.poses.at(o.view);
  const Mat3& rs = problem.rig_extrinsic.rotation();
  const Intrinsics& k = problem.intrinsics;

  const Vec3 xc = transform_to_camera(lm.position, pose, problem.rig_extrinsic, problem.s,
                                      problem.placement);
  const Vec2 projected = project(xc, k);

  const double iz = 1.0 / xc.z();
  const double u = xc.x() * iz;
  const double v = xc.y() * iz;
  Eigen::Matrix<double, 2, 3> d_proj;
  d_proj << k.fx * iz, 0.0, -k.fx * u * iz,
            0.0, k.fy * iz, -k.fy * v * iz;

  const Vec3 d_xc_ds = problem.placement == ScalePlacement::kMotion
                           ? Vec3(rs * pose.translation())
                           : problem.rig_extrinsic.translation();

  ResidualJacobian j;
  j.residual = o.pixel - projected;
  j.d_scale = -d_proj * d_xc_ds;
  j.d_position = -d_proj * (rs * pose.rotation());
  j.d_intrinsics << -u, 0.0, -1.0, 0.0,
                    0.0, -v, 0.0, -1.0;
  return j;
}

CostGradient cost_gradient(const BAProblem& problem, double sigma_r, double huber_delta) {
  CostGradient out;
  out.d_positions.assign(problem.landmarks.size(), Vec3::Zero());
  const double inv_var = 1.0 / (sigma_r * sigma_r);
  for (std::size_t l = 0; l < problem.landmarks.size(); ++l) {
    for (std::size_t k = 0; k < problem.landmarks[l].track.size(); ++k) {
      ResidualJacobian j;
      try {
        j = residual_jacobian(problem, l, k);
      } catch (const BehindCamera&) {
        continue;
      }
      const double a = j.residual.squaredNorm() * inv_var;
      const double w = 2.0 * inv_var * huber_derivative(a, huber_delta);
      out.d_scale += w * j.d_scale.dot(j.residual);
      out.d_positions[l] += w * j.d_position.transpose() * j.residual;
      out.d_intrinsics += w * j.d_intrinsics.transpose() * j.residual;
    }
  }
  return out;
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kGradientTolerance:
      return "gradient_tolerance";
    case Termination::kParameterTolerance:
      return "parameter_tolerance";
    case Termination::kMaxIterations:
      return "max_iterations";
  }
  return "unknown";
}

BAResult optimize(BAProblem problem, const BAConfig& config) {
  config.validate();
  problem.validate();

  BAReport report;
  report.sigma_r = config.sigma_r ? *config.sigma_r : estimate_sigma_r(problem);
  const double sigma_r = report.sigma_r;
  const double delta = config.huber_delta;
  const int nc = config.optimize_intrinsics ? 5 : 1;

  CostSummary current = evaluate_cost(problem, sigma_r, delta);
  report.initial_cost = current.cost;
  report.cost_trace.push_back(current.cost);
  double lambda = config.lm_initial_damping;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    NormalEquations ne = build_normal_equations(problem, sigma_r, delta);
    if (!config.optimize_intrinsics) {
      ne.H_cc.bottomRightCorner<4, 4>().setIdentity();
      ne.H_cc.row(0).tail<4>().setZero();
      ne.H_cc.col(0).tail<4>().setZero();
      ne.g_c.tail<4>().setZero();
      for (LandmarkBlock& b : ne.blocks) b.H_cl.bottomRows<4>().setZero();
    }

    double grad_norm = ne.g_c.head(nc).cwiseAbs().maxCoeff();
    for (const LandmarkBlock& b : ne.blocks) grad_norm = std::max(grad_norm, b.g.cwiseAbs().maxCoeff());
    if (grad_norm <= config.gradient_tolerance) {
      report.termination = Termination::kGradientTolerance;
      report.iterations = iter;
      report.final_cost = current.cost;
      report.behind_camera = current.behind_camera;
      return {std::move(problem), std::move(report)};
    }

    double param_norm_sq = squared(problem.s);
    if (config.optimize_intrinsics) param_norm_sq += problem.intrinsics.as_vector().squaredNorm();
    for (const Landmark& lm : problem.landmarks) param_norm_sq += lm.position.squaredNorm();
    const double param_norm = std::sqrt(param_norm_sq);

    bool accepted = false;
    bool any_solved = false;
    for (int retry = 0; retry < config.max_damping_retries; ++retry) {
      // Marquardt damping on the diagonal; the floor keeps unobserved
      // directions invertible.
      CamMat S = ne.H_cc;
      for (int i = 0; i < nc; ++i) S(i, i) += lambda * std::max(ne.H_cc(i, i), 1e-12);
      CamVec rhs = -ne.g_c;

      std::vector<Mat3> h_inv(ne.blocks.size());
      bool ok = true;
      for (std::size_t l = 0; l < ne.blocks.size() && ok; ++l) {
        const LandmarkBlock& b = ne.blocks[l];
        Mat3 h = b.H;
        for (int i = 0; i < 3; ++i) h(i, i) += lambda * std::max(b.H(i, i), 1e-12);
        Eigen::LDLT<Mat3> ldlt(h);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
          ok = false;
          break;
        }
        h_inv[l] = ldlt.solve(Mat3::Identity());
        const CamLm w = b.H_cl * h_inv[l];
        S.noalias() -= w * b.H_cl.transpose();
        rhs.noalias() += w * b.g;
      }
      CamVec dc = CamVec::Zero();
      if (ok) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(S.topLeftCorner(nc, nc));
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
          ok = false;
        } else {
          dc.head(nc) = ldlt.solve(rhs.head(nc));
          ok = dc.allFinite();
        }
      }
      if (!ok) {
        lambda *= 10.0;
        continue;
      }
      any_solved = true;

      BAProblem candidate = problem;
      double step_sq = squared(dc[0]);
      candidate.s += dc[0];
      if (config.optimize_intrinsics) {
        candidate.intrinsics =
            Intrinsics::from_vector(problem.intrinsics.as_vector() + dc.tail<4>());
        step_sq += dc.tail<4>().squaredNorm();
      }
      for (std::size_t l = 0; l < ne.blocks.size(); ++l) {
        const LandmarkBlock& b = ne.blocks[l];
        const Vec3 dl = h_inv[l] * (-b.g - b.H_cl.transpose() * dc);
        candidate.landmarks[l].position += dl;
        step_sq += dl.squaredNorm();
      }

      if (std::sqrt(step_sq) <= config.parameter_tolerance * (param_norm + config.parameter_tolerance)) {
        report.termination = Termination::kParameterTolerance;
        report.iterations = iter;
        report.final_cost = current.cost;
        report.behind_camera = current.behind_camera;
        return {std::move(problem), std::move(report)};
      }

      bool valid = candidate.intrinsics.fx > 0.0 && candidate.intrinsics.fy > 0.0;
      CostSummary next;
      if (valid) {
        next = evaluate_cost(candidate, sigma_r, delta);
        // Dropping observations behind a camera must not look like progress.
        valid = next.behind_camera <= current.behind_camera;
      }
      if (valid && next.cost < current.cost) {
        problem = std::move(candidate);
        current = next;
        report.cost_trace.push_back(current.cost);
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }

    if (!accepted) {
      if (!any_solved) {
        throw SingularNormalEquations("normal equations stayed singular after " +
                                      std::to_string(config.max_damping_retries) +
                                      " damping increases");
      }
      // Solvable but no decrease at any damping: the iterate is a minimum to
      // working precision.
      report.termination = Termination::kParameterTolerance;
      report.iterations = iter;
      report.final_cost = current.cost;
      report.behind_camera = current.behind_camera;
      return {std::move(problem), std::move(report)};
    }
    report.iterations = iter + 1;
  }

  report.termination = Termination::kMaxIterations;
  report.final_cost = current.cost;
  report.behind_camera = current.behind_camera;
  return {std::move(problem), std::move(report)};
}

Vec3 triangulate(std::span<const TrackObservation> track, std::span<const RigidTransform> poses,
                 const RigidTransform& rig, const Intrinsics& k, double s,
                 ScalePlacement placement) {
  if (track.size() < 2) throw std::invalid_argument("triangulation needs at least two views");
  k.validate();

  const StereoRig stereo{rig, k};
  std::vector<RigidTransform> cams;
  std::vector<Vec3> rays;
  cams.reserve(track.size());
  for (const TrackObservation& obs : track) {
    if (obs.view >= poses.size()) throw std::invalid_argument("track references unknown view");
    cams.push_back(secondary_pose(poses[obs.view], stereo, s, placement));
    const NormalizedPoint p = normalize(obs.pixel, k);
    rays.push_back((cams.back().rotation().transpose() * p.homogeneous()).normalized());
  }

  double max_angle = 0.0;
  for (std::size_t a = 0; a < rays.size(); ++a) {
    for (std::size_t b = a + 1; b < rays.size(); ++b) {
      const double c = std::clamp(rays[a].dot(rays[b]), -1.0, 1.0);
      max_angle = std::max(max_angle, std::acos(c));
    }
  }
  if (max_angle < kMinRayAngleDegrees * kPi / 180.0) {
    throw DegenerateRays("largest ray angle " + std::to_string(max_angle * 180.0 / kPi) +
                         " deg is below the triangulation limit");
  }

  Eigen::MatrixXd a(2 * static_cast<Eigen::Index>(track.size()), 4);
  for (std::size_t i = 0; i < track.size(); ++i) {
    const NormalizedPoint p = normalize(track[i].pixel, k);
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = cams[i].rotation();
    P.col(3) = cams[i].translation();
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) = p.x * P.row(2) - P.row(0);
    a.row(r + 1) = p.y * P.row(2) - P.row(1);
  }
  // Row scaling keeps the SVD well conditioned for large scene coordinates.
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double n = a.row(r).norm();
    if (n > 0.0) a.row(r) /= n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h[3]) < std::numeric_limits<double>::epsilon() * h.head<3>().norm()) {
    throw DegenerateRays("triangulated point is at infinity");
  }
  Vec3 x = h.head<3>() / h[3];

  auto pixel_cost = [&](const Vec3& pt, bool* ok) {
    double c = 0.0;
    for (std::size_t i = 0; i < track.size(); ++i) {
      const Vec3 xc = cams[i].apply(pt);
      if (!(xc.z() > kMinDepth)) {
        *ok = false;
        return std::numeric_limits<double>::infinity();
      }
      c += (track[i].pixel - project(xc, k)).squaredNorm();
    }
    *ok = true;
    return c;
  };

  bool ok = false;
  double c = pixel_cost(x, &ok);
  if (!ok) return x;
  for (int it = 0; it < 10; ++it) {
    Mat3 h3 = Mat3::Zero();
    Vec3 g3 = Vec3::Zero();
    for (std::size_t i = 0; i < track.size(); ++i) {
      const Vec3 xc = cams[i].apply(x);
      const double iz = 1.0 / xc.z();
      Eigen::Matrix<double, 2, 3> dp;
      dp << k.fx * iz, 0.0, -k.fx * xc.x() * iz * iz,
            0.0, k.fy * iz, -k.fy * xc.y() * iz * iz;
      const Eigen::Matrix<double, 2, 3> j = dp * cams[i].rotation();
      const Vec2 r = track[i].pixel - project(xc, k);
      h3 += j.transpose() * j;
      g3 += j.transpose() * r;
    }
    Eigen::LDLT<Mat3> ldlt(h3);
    if (ldlt.info() != Eigen::Success) break;
    const Vec3 step = ldlt.solve(g3);
    if (!step.allFinite()) break;
    const Vec3 trial = x + step;
    bool trial_ok = false;
    const double tc = pixel_cost(trial, &trial_ok);
    if (!trial_ok || !(tc < c)) break;
    x = trial;
    c = tc;
    if (step.norm() <= 1e-14 * (1.0 + x.norm())) break;
  }
  return x;
}

}  // namespace scalemm
