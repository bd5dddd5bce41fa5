#include "ghoi/hoi_repr.hpp"
#include "ghoi/io.hpp"
#include "ghoi/synth_data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace ghoi;

namespace {

Joints42 all_joints_at(const Vec3& p) {
  Joints42 j;
  j.fill(p);
  return j;
}

// A tiny static scene: both hands at rest, object at the origin.
InteractionSequence static_scene(std::size_t l) {
  InteractionSequence s;
  s.geometry.points = {Vec3(0, 0, 0), Vec3(0.1, 0, 0), Vec3(0, 0.1, 0), Vec3(0, 0, 0.1)};
  s.geometry.normals = {Vec3(0, 0, -1), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  HandPose left, right;
  left.global_trans = Vec3(-0.2, -0.2, 0.05);
  right.global_trans = Vec3(0.2, -0.2, 0.05);
  for (std::size_t i = 0; i < l; ++i) {
    s.gaze.push_back(Vec3(0, 0, 0.05));
    s.hands.left.push_back(left);
    s.hands.right.push_back(right);
    s.object.push_back(RigidTransform::identity());
  }
  return s;
}

Eigen::MatrixXd joints_matrix(const InteractionSequence& s) {
  Eigen::MatrixXd j(static_cast<Eigen::Index>(s.length()), layout::kJDim);
  for (std::size_t i = 0; i < s.length(); ++i) {
    const auto f = frame_joints(s.hands, i);
    for (int k = 0; k < 42; ++k) j.block<1, 3>(static_cast<Eigen::Index>(i), 3 * k) = f[k].transpose();
  }
  return j;
}

}  // namespace

TEST(Contact, FarCloudIsAllZero) {
  const std::vector<Vec3> cloud{Vec3(10, 10, 10), Vec3(11, 10, 10)};
  const auto flags = contact_flags(all_joints_at(Vec3::Zero()), cloud);
  for (double f : flags) EXPECT_EQ(f, 0.0);
}

TEST(Contact, OnSurfaceIsOne) {
  const std::vector<Vec3> cloud{Vec3(0.3, 0, 0), Vec3(0, 0, 0)};
  const auto flags = contact_flags(all_joints_at(Vec3::Zero()), cloud);
  for (double f : flags) EXPECT_EQ(f, 1.0);
}

TEST(Contact, ThresholdIsStrict) {
  const std::vector<Vec3> cloud{Vec3(0.25, 0, 0)};
  auto j = all_joints_at(Vec3(0.25 - 0.25, 0, 0));
  EXPECT_EQ(contact_flags(j, cloud, 0.25)[0], 0.0);
  EXPECT_EQ(contact_flags(j, cloud, 0.2500001)[0], 1.0);
  EXPECT_THROW(contact_flags(j, std::vector<Vec3>{}), Error);
}

TEST(Offsets, PointsFromJointToNearestSurface) {
  const std::vector<Vec3> cloud{Vec3(1, 0, 0), Vec3(0, 2, 0)};
  Joints42 j = all_joints_at(Vec3(0, 0, 0));
  j[layout::kRightWrist] = Vec3(0, 1.9, 0);
  const auto f = offsets(j, cloud);
  EXPECT_TRUE(f.segment<3>(0).isApprox(Vec3(1, 0, 0)));
  EXPECT_NEAR((f.segment<3>(3 * layout::kRightWrist) - Vec3(0, 0.1, 0)).norm(), 0.0, 1e-12);
  EXPECT_TRUE(f.segment<3>(126).isApprox(Vec3(0, 1.9, 0)));
}

TEST(Offsets, MatchesIndependentScanOnRandomFrames) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::vector<Vec3> cloud(300);
  for (auto& p : cloud) p = Vec3(u(rng), u(rng), u(rng));
  for (int frame = 0; frame < 20; ++frame) {
    Joints42 j;
    for (auto& p : j) p = Vec3(u(rng), u(rng), u(rng));
    const auto f = offsets(j, cloud);
    for (int k = 0; k < 42; ++k) {
      double best = 1e9;
      Vec3 off;
      for (const auto& c : cloud) {
        if ((c - j[k]).norm() < best) {
          best = (c - j[k]).norm();
          off = c - j[k];
        }
      }
      EXPECT_LT((f.segment<3>(3 * k) - off).norm(), 1e-12);
    }
  }
}

TEST(Kinematics, ConstantPoseGivesZero) {
  const std::vector<Vec3> roots(5, Vec3(0.1, 0.2, 0.3));
  const std::vector<Mat3> rots(5, Rotation::from_axis_angle(Vec3(0.2, 0.1, 0)).matrix());
  const auto k = velocities_accelerations(roots, roots, rots, rots, 30.0);
  EXPECT_LT(k.v.norm(), 1e-12);
  EXPECT_LT(k.a.norm(), 1e-10);
}

TEST(Kinematics, ConstantLinearVelocity) {
  // right wrist moving +x at 0.01 m/frame at 30 fps -> 0.3 m/s
  std::vector<Vec3> left(6, Vec3::Zero()), right;
  for (int i = 0; i < 6; ++i) right.push_back(Vec3(0.01 * i, 0, 0));
  const std::vector<Mat3> rots(6, Mat3::Identity());
  const auto k = velocities_accelerations(left, right, rots, rots, 30.0);
  for (int i = 1; i < 6; ++i) {
    EXPECT_NEAR(k.v(i, 6), 0.3, 1e-12);
    EXPECT_NEAR(k.v(i, 12), 0.3, 1e-12);
  }
  for (int i = 2; i < 6; ++i) EXPECT_NEAR(k.a.row(i).norm(), 0.0, 1e-9);
  EXPECT_EQ(k.v.row(0).norm(), 0.0);
}

TEST(Kinematics, AngularVelocityMatchesSpinRate) {
  const double w = 0.05;  // rad per frame about z
  std::vector<Vec3> roots(4, Vec3::Zero());
  std::vector<Mat3> rl, rr;
  for (int i = 0; i < 4; ++i) {
    rl.push_back(Mat3::Identity());
    rr.push_back(Rotation::from_axis_angle(Vec3(0, 0, w * i)).matrix() *
                 Rotation::from_axis_angle(Vec3(0.3, 0, 0)).matrix());
  }
  const auto k = velocities_accelerations(roots, roots, rl, rr, 30.0);
  for (int i = 1; i < 4; ++i) {
    EXPECT_NEAR(k.v(i, 9), 0.0, 1e-12);
    EXPECT_NEAR(k.v(i, 11), w * 30.0, 1e-9);
    EXPECT_NEAR(k.v(i, 17), w * 30.0, 1e-9);
  }
}

TEST(Kinematics, FiniteDifferenceOracle) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.05);
  const int l = 7;
  const double fps = 24.0;
  std::vector<Vec3> rl, rr;
  std::vector<Mat3> ml, mr;
  for (int i = 0; i < l; ++i) {
    rl.push_back(Vec3(g(rng), g(rng), g(rng)));
    rr.push_back(Vec3(g(rng), g(rng), g(rng)));
    ml.push_back(Rotation::from_axis_angle(Vec3(g(rng), g(rng), g(rng))).matrix());
    mr.push_back(Rotation::from_axis_angle(Vec3(g(rng), g(rng), g(rng))).matrix());
  }
  const auto k = velocities_accelerations(rl, rr, ml, mr, fps);
  for (int i = 1; i < l; ++i) {
    const Vec3 vl = (rl[i] - rl[i - 1]) / (1.0 / fps);
    EXPECT_LT((k.v.block<1, 3>(i, 0).transpose() - vl).norm(), 1e-12);
    // small-angle oracle: R_i R_{i-1}^T ~ I + [w dt]x
    const Mat3 d = mr[i] * mr[i - 1].transpose();
    const Eigen::AngleAxisd aa(d);
    EXPECT_LT((k.v.block<1, 3>(i, 9).transpose() - aa.axis() * aa.angle() * fps).norm(), 1e-9);
    if (i >= 2) {
      const Vec3 vprev = (rl[i - 1] - rl[i - 2]) * fps;
      EXPECT_LT((k.a.block<1, 3>(i, 0).transpose() - (vl - vprev) * fps).norm(), 1e-9);
    }
  }
}

TEST(Canonicalize, ShapeAndStaticScene) {
  const auto s = static_scene(5);
  const auto c = canonicalize(s);
  EXPECT_EQ(c.frames.rows(), 5);
  EXPECT_EQ(c.frames.cols(), 333);
  EXPECT_EQ(c.velocities().norm(), 0.0);
  EXPECT_EQ(c.accelerations().norm(), 0.0);
  EXPECT_EQ(c.contacts().sum(), 0.0);  // hands 20 cm away
  for (int i = 1; i < 5; ++i) EXPECT_EQ((c.frames.row(i) - c.frames.row(0)).norm(), 0.0);
}

TEST(Canonicalize, OffsetsConsistentWithJointsAndGeometry) {
  SceneConfig cfg;
  const auto scene = generate_scene(cfg, 5);
  const auto c = canonicalize(scene.sequence);
  for (Eigen::Index i = 0; i < c.length(); i += 7) {
    const auto world = posed_points(scene.sequence.geometry, scene.sequence.object.pose(static_cast<std::size_t>(i)));
    for (int k = 0; k < 42; ++k) {
      const Vec3 target = c.joint(i, k) + c.offsets().block<1, 3>(i, 3 * k).transpose();
      const auto r = nearest_point(c.joint(i, k), world);
      EXPECT_LT((target - world[r.index]).norm(), 1e-12);
      EXPECT_EQ(c.contacts()(i, k), r.distance < 0.01 ? 1.0 : 0.0);
    }
  }
}

TEST(Recanonicalize, SelfConsistentWithCanonicalize) {
  SceneConfig cfg;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto scene = generate_scene(cfg, seed);
    const auto& s = scene.sequence;
    const auto c = canonicalize(s);
    const auto r = recanonicalize(Eigen::MatrixXd(c.joints()), s.object, s.geometry, s.fps);
    EXPECT_LT((r.offsets - c.offsets()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((r.v - c.velocities()).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((r.a - c.accelerations()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Recanonicalize, ShiftedJointsMoveOffsetsOnly) {
  const auto s = static_scene(4);
  const Eigen::MatrixXd j = joints_matrix(s);
  Eigen::MatrixXd shifted = j;
  for (int k = 0; k < 42; ++k) shifted.col(3 * k) += Eigen::VectorXd::Constant(4, 0.01);
  const auto a = recanonicalize(j, s.object, s.geometry, s.fps);
  const auto b = recanonicalize(shifted, s.object, s.geometry, s.fps);
  EXPECT_LT(b.v.norm(), 1e-10);
  EXPECT_LT(b.a.norm(), 1e-10);
  EXPECT_LT(a.v.norm(), 1e-10);
  // inter-wrist vector unchanged
  EXPECT_LT((a.offsets.rightCols(3) - b.offsets.rightCols(3)).norm(), 1e-12);
}

TEST(Recanonicalize, VjpMatchesFiniteDifferences) {
  SceneConfig cfg;
  const auto scene = generate_scene(cfg, 9);
  const auto& s = scene.sequence;
  const Eigen::MatrixXd j = Eigen::MatrixXd(canonicalize(s).joints());
  const auto base = recanonicalize(j, s.object, s.geometry, s.fps);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::Index l = j.rows();
  Eigen::MatrixXd gf(l, 129), gv = Eigen::MatrixXd::Zero(l, 18), ga = Eigen::MatrixXd::Zero(l, 18);
  for (Eigen::Index i = 0; i < gf.size(); ++i) gf(i) = g(rng);
  for (Eigen::Index i = 0; i < l; ++i)
    for (int c : {0, 1, 2, 6, 7, 8, 12, 13, 14}) {
      gv(i, c) = g(rng);
      ga(i, c) = g(rng);
    }
  const Eigen::MatrixXd analytic = recanonicalize_vjp(gf, gv, ga, s.fps);
  // linear functional on the outputs with nearest indices frozen
  auto value = [&](const Eigen::MatrixXd& jj) {
    auto r = recanonicalize(jj, s.object, s.geometry, s.fps);
    double out = 0.0;
    for (Eigen::Index i = 0; i < l; ++i) {
      const auto world = posed_points(s.geometry, s.object.pose(static_cast<std::size_t>(i)));
      for (int k = 0; k < 42; ++k) {
        const Vec3 jk = jj.block<1, 3>(i, 3 * k).transpose();
        const Vec3 off = world[base.nearest[static_cast<std::size_t>(i)][k]] - jk;
        out += gf.block<1, 3>(i, 3 * k).dot(off.transpose());
      }
      out += gf.block<1, 3>(i, 126).dot(r.offsets.block<1, 3>(i, 126));
    }
    for (int c : {0, 1, 2, 6, 7, 8, 12, 13, 14}) {
      out += gv.col(c).dot(r.v.col(c));
      out += ga.col(c).dot(r.a.col(c));
    }
    return out;
  };
  const double h = 1e-6;
  std::uniform_int_distribution<Eigen::Index> pick(0, j.size() - 1);
  for (int probe = 0; probe < 60; ++probe) {
    const Eigen::Index idx = pick(rng);
    Eigen::MatrixXd p = j, m = j;
    p(idx) += h;
    m(idx) -= h;
    const double fd = (value(p) - value(m)) / (2 * h);
    EXPECT_NEAR(analytic(idx), fd, 1e-4 * std::max(1.0, std::abs(fd))) << "entry " << idx;
  }
}

TEST(SequenceIo, RoundTripIsBitExact) {
  SceneConfig cfg;
  const auto s = generate_scene(cfg, 21).sequence;
  const std::string text = sequence_to_string(s);
  const auto back = sequence_from_json(json::parse(text));
  EXPECT_EQ(sequence_to_string(back), text);
  const auto c1 = canonicalize(s), c2 = canonicalize(back);
  EXPECT_EQ((c1.frames - c2.frames).cwiseAbs().maxCoeff(), 0.0);

  const auto dir = std::filesystem::temp_directory_path() / "ghoi_io_test";
  write_sequence(dir / "a.json", s);
  EXPECT_EQ(sequence_to_string(read_sequence(dir / "a.json")), text);
  std::filesystem::remove_all(dir);
}

TEST(SequenceIo, RejectsVaryingShapeAndBadVersion) {
  SceneConfig cfg;
  const auto s = generate_scene(cfg, 22).sequence;
  json j = sequence_json(s);
  j["right"][1][kHandParamDim - 1] = 1.3;
  EXPECT_THROW(sequence_from_json(j), Error);
  json k = sequence_json(s);
  k["version"] = 99;
  EXPECT_THROW(sequence_from_json(k), Error);
  json m = sequence_json(s);
  m["length"] = 3;
  EXPECT_THROW(sequence_from_json(m), Error);
}
