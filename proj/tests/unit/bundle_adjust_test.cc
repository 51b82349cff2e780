#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "scalemm/bundle_adjust.h"
#include "scalemm/errors.h"
#include "test_support.h"

namespace scalemm {
namespace {

using testing::looking_at_origin;
using testing::random_rotation;
using testing::random_vec;

const Intrinsics kK{800, 820, 320, 256};

// Cameras on a sphere of radius 10 looking at a cloud of points near the
// origin. Pixels are exact projections at scale s_true.
BAProblem make_problem(std::mt19937_64& rng, ScalePlacement placement, double s_true,
                       std::size_t n_views = 6, std::size_t n_points = 40, double pixel_noise = 0.0) {
  BAProblem p;
  p.placement = placement;
  p.intrinsics = kK;
  p.rig_extrinsic = RigidTransform(Eigen::AngleAxisd(0.05, Vec3::UnitY()).toRotationMatrix(),
                                   Vec3(0.4, 0.05, -0.02));
  std::uniform_real_distribution<double> roll(-3.0, 3.0);
  for (std::size_t v = 0; v < n_views; ++v) {
    Vec3 dir = random_vec(rng).normalized();
    dir.z() = -std::abs(dir.z()) - 0.5;
    RigidTransform cam = looking_at_origin(dir.normalized() * 10.0, roll(rng));
    // Primary poses live in SfM units: for kMotion the metric translation is
    // s_true times the stored one.
    if (placement == ScalePlacement::kMotion) {
      cam = RigidTransform(cam.rotation(), cam.translation() / s_true);
    }
    p.poses.push_back(cam);
  }
  if (placement == ScalePlacement::kRig) {
    p.rig_extrinsic = RigidTransform(p.rig_extrinsic.rotation(), p.rig_extrinsic.translation() / s_true);
  }
  std::normal_distribution<double> noise(0.0, pixel_noise > 0 ? pixel_noise : 1.0);
  for (std::size_t l = 0; l < n_points; ++l) {
    Landmark lm;
    lm.position = random_vec(rng, 1.5);
    for (std::size_t v = 0; v < n_views; ++v) {
      const RigidTransform sec = secondary_pose(p.poses[v], {p.rig_extrinsic, kK}, s_true, placement);
      const Vec3 xc = sec.apply(lm.position);
      Vec2 px(kK.fx * xc.x() / xc.z() + kK.cx, kK.fy * xc.y() / xc.z() + kK.cy);
      if (pixel_noise > 0) px += Vec2(noise(rng), noise(rng));
      lm.track.push_back({v, px});
    }
    p.landmarks.push_back(lm);
  }
  p.s = s_true;
  return p;
}

TEST(TransformToCamera, MatchesSecondaryPose) {
  std::mt19937_64 rng(1);
  for (auto placement : {ScalePlacement::kMotion, ScalePlacement::kRig}) {
    const RigidTransform pose = testing::random_transform(rng, 3.0);
    const RigidTransform rig = testing::random_transform(rng, 0.5);
    const Vec3 x = random_vec(rng, 2.0);
    const double s = 1.7;
    const Vec3 expected = secondary_pose(pose, {rig, {}}, s, placement).apply(x);
    EXPECT_LT((transform_to_camera(x, pose, rig, s, placement) - expected).norm(), 1e-12);
  }
}

TEST(TransformToCamera, IdentityCases) {
  const RigidTransform rig(Mat3::Identity(), Vec3(1, 0, 0));
  const RigidTransform pose(Mat3::Identity(), Vec3(0, 0, 2));
  const Vec3 x(1, 2, 3);
  // kMotion: s * (x + t_v) + t_s without rotation is x + s t_v + t_s.
  EXPECT_LT((transform_to_camera(x, pose, rig, 2.0, ScalePlacement::kMotion) - Vec3(2, 2, 7)).norm(), 1e-15);
  EXPECT_LT((transform_to_camera(x, pose, rig, 2.0, ScalePlacement::kRig) - Vec3(3, 2, 5)).norm(), 1e-15);
}

TEST(Project, WorkedExample) {
  const Vec2 px = project(Vec3(0.5, -0.25, 2.0), kK);
  EXPECT_DOUBLE_EQ(px.x(), 520.0);
  EXPECT_DOUBLE_EQ(px.y(), 153.5);
  EXPECT_THROW(project(Vec3(0, 0, 0), kK), BehindCamera);
  EXPECT_THROW(project(Vec3(1, 1, -1), kK), BehindCamera);
}

TEST(Huber, QuadraticAndLinearBranches) {
  EXPECT_DOUBLE_EQ(huber(0.5, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(huber(9.0, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(huber(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(huber_derivative(0.5, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(huber_derivative(9.0, 1.0), 1.0 / 3.0);
  // Continuous at the knee.
  EXPECT_NEAR(huber(4.0 - 1e-12, 2.0), huber(4.0 + 1e-12, 2.0), 1e-10);
  const double h = 1e-6;
  for (double a : {0.3, 2.0, 10.0}) {
    EXPECT_NEAR(huber_derivative(a, 1.2), (huber(a + h, 1.2) - huber(a - h, 1.2)) / (2 * h), 1e-7);
  }
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

TEST(ResidualJacobian, MatchesCentralDifferences) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  int states = 0;
  for (auto placement : {ScalePlacement::kMotion, ScalePlacement::kRig}) {
    for (int trial = 0; trial < 10; ++trial) {
      BAProblem p = make_problem(rng, placement, scale(rng), 4, 5, 0.5);
      p.s *= scale(rng);
      p.intrinsics.fx *= 1.1;
      p.intrinsics.cy -= 7.0;
      for (std::size_t l = 0; l < p.landmarks.size(); ++l) {
        p.landmarks[l].position += random_vec(rng, 0.05);
        for (std::size_t o = 0; o < p.landmarks[l].track.size(); ++o, ++states) {
          const ResidualJacobian j = residual_jacobian(p, l, o);
          EXPECT_LT((j.residual - reprojection_residual(p, l, o)).norm(), 1e-12);
          auto fd = [&](auto&& bump) {
            BAProblem a = p, b = p;
            const double h = bump(a, 1.0);
            bump(b, -1.0);
            return Vec2((reprojection_residual(a, l, o) - reprojection_residual(b, l, o)) / (2 * h));
          };
          const Vec2 ds = fd([](BAProblem& q, double sgn) {
            const double h = 1e-6 * q.s;
            q.s += sgn * h;
            return h;
          });
          for (int r = 0; r < 2; ++r) EXPECT_LT(rel_err(j.d_scale[r], ds[r]), 1e-5);
          for (int c = 0; c < 3; ++c) {
            const Vec2 dx = fd([&](BAProblem& q, double sgn) {
              const double h = 1e-6;
              q.landmarks[l].position[c] += sgn * h;
              return h;
            });
            for (int r = 0; r < 2; ++r) EXPECT_LT(rel_err(j.d_position(r, c), dx[r]), 1e-5);
          }
          for (int c = 0; c < 4; ++c) {
            const Vec2 dk = fd([&](BAProblem& q, double sgn) {
              Eigen::Vector4d v = q.intrinsics.as_vector();
              const double h = 1e-6 * std::abs(v[c]);
              v[c] += sgn * h;
              q.intrinsics = Intrinsics::from_vector(v);
              return h;
            });
            for (int r = 0; r < 2; ++r) EXPECT_LT(rel_err(j.d_intrinsics(r, c), dk[r]), 1e-5);
          }
        }
      }
    }
  }
  EXPECT_GE(states, 100);
}

TEST(CostGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  BAProblem p = make_problem(rng, ScalePlacement::kMotion, 1.3, 4, 6, 2.0);
  p.s = 1.5;
  const double sigma = 1.5, delta = 1.0;
  const CostGradient g = cost_gradient(p, sigma, delta);
  auto c = [&](const BAProblem& q) { return evaluate_cost(q, sigma, delta).cost; };
  BAProblem a = p, b = p;
  const double h = 1e-6;
  a.s += h;
  b.s -= h;
  EXPECT_LT(rel_err(g.d_scale, (c(a) - c(b)) / (2 * h)), 1e-5);
  for (int k = 0; k < 4; ++k) {
    a = p;
    b = p;
    Eigen::Vector4d va = a.intrinsics.as_vector(), vb = va;
    va[k] += 1e-4;
    vb[k] -= 1e-4;
    a.intrinsics = Intrinsics::from_vector(va);
    b.intrinsics = Intrinsics::from_vector(vb);
    EXPECT_LT(rel_err(g.d_intrinsics[k], (c(a) - c(b)) / 2e-4), 1e-5);
  }
  a = p;
  b = p;
  a.landmarks[2].position.x() += h;
  b.landmarks[2].position.x() -= h;
  EXPECT_LT(rel_err(g.d_positions[2].x(), (c(a) - c(b)) / (2 * h)), 1e-5);
}

TEST(Optimize, TruthIsAFixedPoint) {
  std::mt19937_64 rng(4);
  const BAProblem p = make_problem(rng, ScalePlacement::kMotion, 2.0);
  BAConfig config;
  config.sigma_r = 1.0;
  const BAResult r = optimize(p, config);
  EXPECT_TRUE(r.report.converged());
  EXPECT_NEAR(r.problem.s, 2.0, 1e-9);
  EXPECT_NEAR(r.report.final_cost, 0.0, 1e-12);
}

TEST(Optimize, RecoversPerturbedScale) {
  for (auto placement : {ScalePlacement::kMotion, ScalePlacement::kRig}) {
    std::mt19937_64 rng(5);
    BAProblem p = make_problem(rng, placement, 0.8);
    p.s *= 1.5;
    for (bool intrinsics : {true, false}) {
      BAConfig config;
      config.optimize_intrinsics = intrinsics;
      const BAResult r = optimize(p, config);
      EXPECT_TRUE(r.report.converged()) << to_string(r.report.termination);
      EXPECT_NEAR(r.problem.s, 0.8, 1e-6 * 0.8);
    }
  }
}

TEST(Optimize, FrozenIntrinsicsAndPosesAreUntouched) {
  std::mt19937_64 rng(6);
  BAProblem p = make_problem(rng, ScalePlacement::kRig, 1.0, 5, 30, 0.5);
  p.s = 1.2;
  BAConfig config;
  config.optimize_intrinsics = false;
  const BAResult r = optimize(p, config);
  EXPECT_TRUE(r.problem.intrinsics == p.intrinsics);
  ASSERT_EQ(r.problem.poses.size(), p.poses.size());
  for (std::size_t v = 0; v < p.poses.size(); ++v) {
    EXPECT_EQ(r.problem.poses[v].rotation(), p.poses[v].rotation());
    EXPECT_EQ(r.problem.poses[v].translation(), p.poses[v].translation());
  }
  EXPECT_EQ(r.problem.rig_extrinsic.translation(), p.rig_extrinsic.translation());
}

TEST(Optimize, CostTraceIsMonotone) {
  std::mt19937_64 rng(7);
  BAProblem p = make_problem(rng, ScalePlacement::kMotion, 1.0, 6, 60, 1.0);
  p.s = 1.4;
  p.landmarks[0].track[0].pixel += Vec2(40, -30);  // outlier for the Huber branch
  const BAResult r = optimize(p, BAConfig{});
  ASSERT_GE(r.report.cost_trace.size(), 2u);
  EXPECT_EQ(r.report.cost_trace.front(), r.report.initial_cost);
  EXPECT_EQ(r.report.cost_trace.back(), r.report.final_cost);
  for (std::size_t k = 1; k < r.report.cost_trace.size(); ++k) {
    EXPECT_LE(r.report.cost_trace[k], r.report.cost_trace[k - 1]);
  }
  EXPECT_LT(std::abs(r.problem.s - 1.0), 0.05);
}

TEST(Optimize, AutoSigmaIsFloored) {
  std::mt19937_64 rng(8);
  const BAProblem p = make_problem(rng, ScalePlacement::kMotion, 1.0);
  EXPECT_EQ(estimate_sigma_r(p), 1e-3);
}

TEST(BAProblem, ValidateRejectsDanglingView) {
  std::mt19937_64 rng(9);
  BAProblem p = make_problem(rng, ScalePlacement::kMotion, 1.0, 3, 4);
  p.landmarks[1].track[0].view = 99;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Triangulate, ExactDataIsRecovered) {
  std::mt19937_64 rng(10);
  for (auto placement : {ScalePlacement::kMotion, ScalePlacement::kRig}) {
    const BAProblem p = make_problem(rng, placement, 1.7, 5, 20);
    for (const Landmark& lm : p.landmarks) {
      const Vec3 x = triangulate(lm.track, p.poses, p.rig_extrinsic, p.intrinsics, p.s, placement);
      EXPECT_LT((x - lm.position).norm(), 1e-8);
    }
  }
}

TEST(Triangulate, NoisyDataIsClose) {
  std::mt19937_64 rng(11);
  const BAProblem p = make_problem(rng, ScalePlacement::kMotion, 1.0, 6, 20, 0.5);
  for (const Landmark& lm : p.landmarks) {
    const Vec3 x = triangulate(lm.track, p.poses, p.rig_extrinsic, p.intrinsics, p.s, p.placement);
    EXPECT_LT((x - lm.position).norm(), 0.05);
  }
}

TEST(Triangulate, ParallelRaysAreDegenerate) {
  // Two views at the same center observing the same pixel.
  const std::vector<RigidTransform> poses{RigidTransform(), RigidTransform()};
  const RigidTransform rig(Mat3::Identity(), Vec3(0.1, 0, 0));
  const std::vector<TrackObservation> track{{0, Vec2(300, 200)}, {1, Vec2(300, 200)}};
  EXPECT_THROW(triangulate(track, poses, rig, kK, 1.0, ScalePlacement::kMotion), DegenerateRays);
}

}  // namespace
}  // namespace scalemm
