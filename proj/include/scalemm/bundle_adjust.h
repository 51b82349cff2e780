#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scalemm/geometry.h"

namespace scalemm {

struct TrackObservation {
  std::size_t view = 0;  // index into BAProblem::poses
  Vec2 pixel = Vec2::Zero();
};

struct Landmark {
  Vec3 position = Vec3::Zero();
  std::vector<TrackObservation> track;
};

// Scale-oriented bundle adjustment state. The scale, landmark positions and
// secondary intrinsics are free; primary poses and the rig extrinsic are
// held fixed.
struct BAProblem {
  double s = 1.0;
  std::vector<Landmark> landmarks;
  Intrinsics intrinsics;
  std::vector<RigidTransform> poses;
  RigidTransform rig_extrinsic;
  ScalePlacement placement = ScalePlacement::kMotion;

  // Throws std::invalid_argument on a dangling view index or a short track.
  void validate() const;
};

struct BAConfig {
  double huber_delta = 1.0;
  // Standard deviation of the reprojection error in pixels. When unset it
  // is estimated from the initial residuals (1.4826 * median |component|).
  std::optional<double> sigma_r;
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;
  double parameter_tolerance = 1e-12;
  double lm_initial_damping = 1e-4;
  int max_damping_retries = 30;
  bool optimize_intrinsics = true;

  void validate() const;
};

// Points closer to the image plane than this are not projectable.
inline constexpr double kMinDepth = 1e-8;
// Triangulation requires some pair of rays at least this far apart.
inline constexpr double kMinRayAngleDegrees = 0.1;

Vec3 transform_to_camera(const Vec3& x, const RigidTransform& pose, const RigidTransform& rig,
                         double s, ScalePlacement placement);
Vec3 transform_to_camera(const Vec3& x, std::size_t view, const BAProblem& problem);

// Pinhole projection. Throws BehindCamera when Z <= kMinDepth.
Vec2 project(const Vec3& x_cam, const Intrinsics& k);

// Observed minus projected pixel for observation k of landmark l.
Vec2 reprojection_residual(const BAProblem& problem, std::size_t landmark, std::size_t obs);

// Huber loss on a squared argument: a for a <= delta^2, else 2 delta sqrt(a) - delta^2.
double huber(double a, double delta);
// d huber / d a.
double huber_derivative(double a, double delta);

struct CostSummary {
  double cost = 0.0;
  std::size_t observations = 0;
  std::size_t behind_camera = 0;  // excluded from the sum
};

CostSummary evaluate_cost(const BAProblem& problem, double sigma_r, double huber_delta);
// Requires config.sigma_r to be set.
double cost(const BAProblem& problem, const BAConfig& config);

// Estimate of sigma_r from the current residuals; never below min_sigma.
double estimate_sigma_r(const BAProblem& problem, double min_sigma = 1e-3);

struct ResidualJacobian {
  Vec2 residual = Vec2::Zero();
  Eigen::Vector2d d_scale = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 3> d_position = Eigen::Matrix<double, 2, 3>::Zero();
  Eigen::Matrix<double, 2, 4> d_intrinsics = Eigen::Matrix<double, 2, 4>::Zero();  // fx fy cx cy
};

// Analytic derivatives of reprojection_residual. Throws BehindCamera.
ResidualJacobian residual_jacobian(const BAProblem& problem, std::size_t landmark,
                                   std::size_t obs);

struct CostGradient {
  double d_scale = 0.0;
  std::vector<Vec3> d_positions;
  Eigen::Vector4d d_intrinsics = Eigen::Vector4d::Zero();
};

CostGradient cost_gradient(const BAProblem& problem, double sigma_r, double huber_delta);

enum class Termination {
  kGradientTolerance,
  kParameterTolerance,
  kMaxIterations,
};

std::string_view to_string(Termination t);

struct BAReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double sigma_r = 0.0;
  std::vector<double> cost_trace;  // accepted costs, starting with the initial one
  Termination termination = Termination::kMaxIterations;
  std::size_t behind_camera = 0;

  bool converged() const { return termination != Termination::kMaxIterations; }
};

struct BAResult {
  BAProblem problem;
  BAReport report;
};

// Levenberg-Marquardt with a Schur complement over the landmarks. A run that
// hits max_iterations returns the best iterate with converged() == false.
// Throws SingularNormalEquations when damping retries are exhausted.
BAResult optimize(BAProblem problem, const BAConfig& config);

// Linear triangulation of a track in world coordinates using the secondary
// cameras implied by scale s, refined by a few Gauss-Newton steps on the
// pixel reprojection error. Throws DegenerateRays when every pair of rays is
// closer than kMinRayAngleDegrees.
Vec3 triangulate(std::span<const TrackObservation> track, std::span<const RigidTransform> poses,
                 const RigidTransform& rig, const Intrinsics& k, double s,
                 ScalePlacement placement);

}  // namespace scalemm
