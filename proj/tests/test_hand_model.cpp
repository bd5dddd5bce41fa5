#include "ghoi/hand_model.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <random>

using namespace ghoi;

namespace {

HandPose random_pose(std::mt19937_64& rng, double global_scale = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const AngleLimits lim;
  HandPose p;
  for (int s = 0; s < kNumArticulated; ++s)
    for (int a = 0; a < 3; ++a) {
      const auto [lo, hi] = lim.range[s][a];
      p.angle(s, a) = lo + (hi - lo) * u(rng);
    }
  p.global_rot = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5) * 2.0 * global_scale;
  p.global_trans = Vec3(u(rng), u(rng), u(rng)) * 0.3;
  return p;
}

double mpjpe_mm(const Joints21& a, const Joints21& b) {
  double s = 0.0;
  for (int j = 0; j < kNumJoints; ++j) s += (a[j] - b[j]).norm();
  return 1000.0 * s / kNumJoints;
}

}  // namespace

TEST(ForwardKinematics, ZeroPoseGivesTemplate) {
  const HandShape shape;
  const auto j = forward_kinematics(shape, HandPose{});
  const auto rest = shape.rest_joints();
  for (int k = 0; k < kNumJoints; ++k) EXPECT_EQ(j[k], rest[k]);
}

TEST(ForwardKinematics, GlobalTranslationShiftsEveryJoint) {
  const HandShape shape;
  std::mt19937_64 rng(1);
  HandPose p = random_pose(rng);
  const auto a = forward_kinematics(shape, p);
  p.global_trans += Vec3(0, 0, 0.1);
  const auto b = forward_kinematics(shape, p);
  for (int k = 0; k < kNumJoints; ++k) EXPECT_LT((b[k] - a[k] - Vec3(0, 0, 0.1)).norm(), 1e-12);
}

TEST(ForwardKinematics, IndexFlexionMatchesStandaloneChain) {
  const HandShape shape;
  HandPose p;
  p.angle(3, 0) = M_PI / 2;  // index MCP flexion
  const auto j = forward_kinematics(shape, p);

  // standalone chain: rotate the three distal offsets by 90 degrees about x
  // (y, z) -> (y cos - z sin, y sin + z cos)
  const double mcp[3] = {0.022, 0.0, 0.090};
  const double segs[3][3] = {{0, 0, 0.040}, {0, 0, 0.024}, {0, 0, 0.020}};
  double pos[3] = {mcp[0], mcp[1], mcp[2]};
  EXPECT_LT((j[5] - Vec3(pos[0], pos[1], pos[2])).norm(), 1e-12);
  for (int s = 0; s < 3; ++s) {
    pos[0] += segs[s][0];
    pos[1] += -segs[s][2];
    pos[2] += segs[s][1];
    EXPECT_LT((j[6 + s] - Vec3(pos[0], pos[1], pos[2])).norm(), 1e-12) << "joint " << 6 + s;
  }
  // other fingers untouched
  const auto rest = shape.rest_joints();
  for (int k : {1, 2, 3, 4, 9, 12, 16, 20}) EXPECT_EQ(j[k], rest[k]);
}

TEST(ForwardKinematics, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  HandShape shape;
  shape.beta[0] = 1.1;
  shape.beta[1] = 0.9;
  const double h = 1e-5;
  int checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    shape.left = trial % 2 == 1;
    const HandPose p = random_pose(rng);
    const FkJacobian jac = forward_kinematics_jacobian(shape, p);
    for (int c = 0; c < 6 + kThetaDim; ++c) {
      HandPose pp = p, pm = p;
      auto bump = [&](HandPose& q, double d) {
        if (c < 3) q.global_rot[c] += d;
        else if (c < 6) q.global_trans[c - 3] += d;
        else q.theta[c - 6] += d;
      };
      bump(pp, h);
      bump(pm, -h);
      const auto jp = forward_kinematics(shape, pp);
      const auto jm = forward_kinematics(shape, pm);
      Eigen::VectorXd fd(3 * kNumJoints);
      for (int k = 0; k < kNumJoints; ++k) fd.segment<3>(3 * k) = (jp[k] - jm[k]) / (2 * h);
      const double denom = std::max(fd.norm(), 1e-6);
      const double rel = (jac.col(c) - fd).norm() / denom;
      worst = std::max(worst, rel);
      ++checked;
    }
  }
  EXPECT_GE(checked, 100);
  EXPECT_LE(worst, 1e-3);
}

TEST(BoneLengths, TemplateMatchesShippedSkeletonTable) {
  std::ifstream in(std::string(GHOI_ASSET_DIR) + "/skeleton_v1.json");
  ASSERT_TRUE(in.good());
  const auto doc = nlohmann::json::parse(in);
  ASSERT_EQ(doc["version"].get<int>(), skeleton::kVersion);
  const auto& joints = doc["joints"];
  ASSERT_EQ(joints.size(), static_cast<std::size_t>(kNumJoints));
  const auto lengths = bone_lengths(HandShape{}.rest_joints());
  for (int k = 1; k < kNumJoints; ++k) {
    const auto& j = joints[static_cast<std::size_t>(k)];
    EXPECT_EQ(j["name"].get<std::string>(), std::string(skeleton::kNames[k]));
    EXPECT_EQ(j["parent"].get<int>(), skeleton::kParents[k]);
    const auto o = j["rest_offset"].get<std::vector<double>>();
    EXPECT_NEAR(lengths[k - 1], std::sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]), 1e-15);
  }
}

TEST(BoneLengths, RigidInvarianceAndScaling) {
  std::mt19937_64 rng(3);
  HandShape shape;
  const HandPose p = random_pose(rng);
  const auto base = bone_lengths(forward_kinematics(shape, p));
  HandPose moved = p;
  moved.global_rot = Vec3(0.4, -1.2, 2.0);
  moved.global_trans = Vec3(-3, 4, 1);
  const auto l2 = bone_lengths(forward_kinematics(shape, moved));
  for (int k = 0; k < kNumBones; ++k) EXPECT_NEAR(base[k], l2[k], 1e-9);

  HandShape big;
  big.beta[0] = 2.0;
  const auto rest = bone_lengths(HandShape{}.rest_joints());
  const auto doubled = bone_lengths(forward_kinematics(big, HandPose{}));
  for (int k = 0; k < kNumBones; ++k) EXPECT_NEAR(doubled[k], 2.0 * rest[k], 1e-12);
}

TEST(BoneLengths, IndependentOfPose) {
  std::mt19937_64 rng(4);
  HandShape shape;
  shape.beta[4] = 1.3;
  const auto ref = bone_lengths(shape.rest_joints());
  for (int t = 0; t < 50; ++t) {
    const auto l = bone_lengths(forward_kinematics(shape, random_pose(rng)));
    for (int k = 0; k < kNumBones; ++k) EXPECT_NEAR(l[k], ref[k], 1e-9);
  }
}

TEST(HandSurface, PointsLieWithinCapsules) {
  std::mt19937_64 rng(5);
  HandShape shape;
  shape.beta[0] = 1.2;
  const HandPose p = random_pose(rng);
  const auto joints = forward_kinematics(shape, p);
  const auto pts = sample_hand_surface(shape, p, 400, 99);
  ASSERT_EQ(pts.size(), 400u);
  const double r = capsule_radius(shape);
  for (const auto& q : pts) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 1; k < kNumJoints; ++k) {
      const Vec3 a = joints[skeleton::kParents[k]], b = joints[k];
      const double t = std::clamp((q - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
      best = std::min(best, (a + t * (b - a) - q).norm());
    }
    EXPECT_LE(best, r + 1e-12);
  }
}

TEST(HandSurface, DeterministicAndJointsMode) {
  const HandShape shape;
  const HandPose p;
  EXPECT_EQ(sample_hand_surface(shape, p, 64, 7), sample_hand_surface(shape, p, 64, 7));
  EXPECT_NE(sample_hand_surface(shape, p, 64, 7), sample_hand_surface(shape, p, 64, 8));
  const auto j = sample_hand_surface(shape, p, 21, 0, SurfaceMode::Joints);
  const auto fk = forward_kinematics(shape, p);
  ASSERT_EQ(j.size(), 21u);
  for (int k = 0; k < kNumJoints; ++k) EXPECT_EQ(j[k], fk[k]);
  EXPECT_THROW(sample_hand_surface(shape, p, 20, 0), Error);
}

TEST(AngleClamp, Behaviour) {
  std::mt19937_64 rng(6);
  const AngleLimits lim;
  const HandPose in_range = random_pose(rng);
  const HandPose same = clamp_pose_angles(in_range, lim);
  EXPECT_EQ(same.theta, in_range.theta);

  HandPose p;
  p.angle(3, 1) = 1.0;  // index MCP abduction
  p.angle(4, 2) = -3.0;
  p.global_rot = Vec3(5, 0, 0);
  const HandPose c = clamp_pose_angles(p, lim);
  EXPECT_DOUBLE_EQ(c.angle(3, 1), 0.35);
  EXPECT_DOUBLE_EQ(c.angle(4, 2), -0.05);
  EXPECT_EQ(c.global_rot, p.global_rot);
  EXPECT_EQ(clamp_pose_angles(c, lim).theta, c.theta);
}

TEST(PoseFit, RecoversFkTargets) {
  std::mt19937_64 rng(7);
  const HandShape shape;
  for (int t = 0; t < 10; ++t) {
    const HandPose truth = random_pose(rng);
    const auto target = forward_kinematics(shape, truth);
    const auto fit = fit_pose_to_joints(target, shape, HandPose{});
    EXPECT_LE(fit.iterations, 500);
    EXPECT_LE(mpjpe_mm(forward_kinematics(shape, fit.pose), target), 2.0);
    EXPECT_TRUE(AngleLimits{}.contains(fit.pose));
  }
}

TEST(PoseFit, RigidTargetsRecoveredByAlignmentAlone) {
  const HandShape shape;
  HandPose truth;
  truth.global_rot = Vec3(0.3, -1.0, 0.8);
  truth.global_trans = Vec3(0.1, 0.2, -0.3);
  const auto target = forward_kinematics(shape, truth);
  FitOptions opt;
  opt.iterations = 0;
  const auto fit = fit_pose_to_joints(target, shape, HandPose{}, opt);
  EXPECT_LT(fit.loss, 1e-9);
  for (double v : fit.pose.theta) EXPECT_EQ(v, 0.0);
}

TEST(PoseFit, NoisyTargets) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> noise(-0.001, 0.001);
  const HandShape shape;
  for (int t = 0; t < 10; ++t) {
    const HandPose truth = random_pose(rng);
    const auto clean = forward_kinematics(shape, truth);
    auto target = clean;
    for (auto& p : target) p += Vec3(noise(rng), noise(rng), noise(rng));
    const auto fit = fit_pose_to_joints(target, shape, HandPose{});
    EXPECT_LE(mpjpe_mm(forward_kinematics(shape, fit.pose), target), 3.0);
    EXPECT_TRUE(AngleLimits{}.contains(fit.pose));
  }
}

TEST(PoseFit, GradientDescentReducesLossAndRespectsLimits) {
  std::mt19937_64 rng(9);
  const HandShape shape;
  const auto target = forward_kinematics(shape, random_pose(rng));
  FitOptions opt;
  opt.method = FitMethod::GradientDescent;
  opt.iterations = 200;
  opt.step = 0.02;
  FitOptions zero = opt;
  zero.iterations = 0;
  const double start = fit_pose_to_joints(target, shape, HandPose{}, zero).loss;
  try {
    const auto fit = fit_pose_to_joints(target, shape, HandPose{}, opt);
    EXPECT_LT(fit.loss, start);
    EXPECT_TRUE(AngleLimits{}.contains(fit.pose));
  } catch (const FitDivergence& d) {
    EXPECT_LT(d.best_loss, start);
    EXPECT_TRUE(AngleLimits{}.contains(d.best_pose));
  }
}

TEST(PoseFit, DivergenceCarriesBestPose) {
  std::mt19937_64 rng(10);
  const HandShape shape;
  const auto target = forward_kinematics(shape, random_pose(rng));
  FitOptions opt;
  opt.method = FitMethod::GradientDescent;
  opt.step = -0.01;  // ascent: every iteration raises the loss
  bool diverged = false;
  try {
    fit_pose_to_joints(target, shape, HandPose{}, opt);
  } catch (const FitDivergence& d) {
    diverged = true;
    FitOptions zero = opt;
    zero.iterations = 0;
    EXPECT_DOUBLE_EQ(d.best_loss, fit_pose_to_joints(target, shape, HandPose{}, zero).loss);
    EXPECT_TRUE(AngleLimits{}.contains(d.best_pose));
  }
  EXPECT_TRUE(diverged);
}

TEST(HandParams, LayoutRoundTrip) {
  std::mt19937_64 rng(11);
  HandShape shape;
  shape.beta[3] = 1.2;
  const HandPose p = random_pose(rng);
  const auto v = to_params(p, shape);
  EXPECT_EQ(v.size(), 61u);
  const HandPose q = pose_from_params(v);
  EXPECT_EQ(q.theta, p.theta);
  EXPECT_EQ(q.global_rot, p.global_rot);
  EXPECT_EQ(beta_from_params(v), shape.beta);
}
