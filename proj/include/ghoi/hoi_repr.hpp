#pragma once

#include "ghoi/geometry.hpp"
#include "ghoi/hand_model.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace ghoi {

using GazeSequence = std::vector<Vec3>;

/// Object pose per frame, stored in its serialized form (6D rotation + translation).
struct ObjectMotion {
  std::vector<std::array<double, 6>> rot6d;
  std::vector<Vec3> trans;

  std::size_t size() const { return trans.size(); }

  RigidTransform pose(std::size_t i) const { return {Rotation::from_6d(rot6d[i]), trans[i]}; }

  void push_back(const RigidTransform& t) {
    rot6d.push_back(t.rotation.to_6d());
    trans.push_back(t.translation);
  }

  static ObjectMotion constant(const RigidTransform& t, std::size_t length) {
    ObjectMotion m;
    for (std::size_t i = 0; i < length; ++i) m.push_back(t);
    return m;
  }
};

struct HandMotion {
  HandShape left_shape{{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, true};
  HandShape right_shape{};
  std::vector<HandPose> left;
  std::vector<HandPose> right;
};

struct InteractionSequence {
  GazeSequence gaze;
  HandMotion hands;
  ObjectMotion object;
  PointCloud geometry;
  double fps = 30.0;

  std::size_t length() const { return gaze.size(); }

  void validate() const {
    const std::size_t l = gaze.size();
    if (l < 2) throw Error("sequence must have at least 2 frames");
    if (hands.left.size() != l || hands.right.size() != l || object.size() != l || object.rot6d.size() != l)
      throw Error("sequence components differ in length");
    for (const auto& g : gaze)
      if (!g.allFinite()) throw Error("non-finite gaze point");
    for (std::size_t i = 0; i < l; ++i)
      if (!object.pose(i).rotation.is_valid()) throw Error("invalid object rotation");
    if (geometry.empty()) throw Error("empty geometry");
    geometry.validate();
    hands.left_shape.validate();
    hands.right_shape.validate();
  }
};

/// Both hands' joints for one frame, [left 21, right 21].
using Joints42 = std::array<Vec3, 2 * kNumJoints>;

inline Joints42 frame_joints(const HandMotion& hands, std::size_t i) {
  Joints42 out;
  const auto l = forward_kinematics(hands.left_shape, hands.left[i]);
  const auto r = forward_kinematics(hands.right_shape, hands.right[i]);
  std::copy(l.begin(), l.end(), out.begin());
  std::copy(r.begin(), r.end(), out.begin() + kNumJoints);
  return out;
}

// Per-frame canonical layout: [J 126 | C 42 | F 129 | v 18 | a 18] = 333.
namespace layout {
inline constexpr int kJ = 0;
inline constexpr int kJDim = 126;
inline constexpr int kC = 126;
inline constexpr int kCDim = 42;
inline constexpr int kF = 168;
inline constexpr int kFDim = 129;
inline constexpr int kV = 297;
inline constexpr int kVDim = 18;
inline constexpr int kA = 315;
inline constexpr int kADim = 18;
inline constexpr int kFrameDim = 333;
inline constexpr int kLeftWrist = 0;
inline constexpr int kRightWrist = kNumJoints;
}  // namespace layout

/// l x 333 canonical hand-object interaction tensor.
struct CanonicalHOI {
  Eigen::MatrixXd frames;

  Eigen::Index length() const { return frames.rows(); }
  auto joints() { return frames.middleCols(layout::kJ, layout::kJDim); }
  auto joints() const { return frames.middleCols(layout::kJ, layout::kJDim); }
  auto contacts() const { return frames.middleCols(layout::kC, layout::kCDim); }
  auto offsets() const { return frames.middleCols(layout::kF, layout::kFDim); }
  auto velocities() const { return frames.middleCols(layout::kV, layout::kVDim); }
  auto accelerations() const { return frames.middleCols(layout::kA, layout::kADim); }

  Vec3 joint(Eigen::Index frame, int j) const {
    return frames.block<1, 3>(frame, layout::kJ + 3 * j).transpose();
  }
};

inline Joints42 joints_from_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Joints42 out;
  for (int j = 0; j < 2 * kNumJoints; ++j) out[j] = Vec3(row[3 * j], row[3 * j + 1], row[3 * j + 2]);
  return out;
}

/// Object surface points posed into the world for one frame.
inline std::vector<Vec3> posed_points(const PointCloud& geom, const RigidTransform& pose) {
  std::vector<Vec3> out;
  out.reserve(geom.size());
  for (const auto& p : geom.points) out.push_back(pose.apply(p));
  return out;
}

/// 1 where the joint's nearest-surface distance is strictly below tau.
inline std::array<double, layout::kCDim> contact_flags(const Joints42& joints, std::span<const Vec3> world_points,
                                                       double tau = 0.01) {
  if (world_points.empty()) throw Error("empty geometry");
  std::array<double, layout::kCDim> flags{};
  for (int j = 0; j < layout::kCDim; ++j)
    flags[j] = nearest_point(joints[j], world_points).distance < tau ? 1.0 : 0.0;
  return flags;
}

/// Joint-to-nearest-surface vectors for all 42 joints followed by right wrist - left wrist.
inline Eigen::Matrix<double, layout::kFDim, 1> offsets(const Joints42& joints, std::span<const Vec3> world_points,
                                                       std::array<std::size_t, layout::kCDim>* nearest = nullptr) {
  if (world_points.empty()) throw Error("empty geometry");
  Eigen::Matrix<double, layout::kFDim, 1> f;
  for (int j = 0; j < layout::kCDim; ++j) {
    const auto r = nearest_point(joints[j], world_points);
    f.segment<3>(3 * j) = r.offset;
    if (nearest) (*nearest)[j] = r.index;
  }
  f.segment<3>(126) = joints[layout::kRightWrist] - joints[layout::kLeftWrist];
  return f;
}

struct Kinematics {
  Eigen::MatrixXd v;  // l x 18
  Eigen::MatrixXd a;  // l x 18
};

/// Backward differences of root motion. Angular velocity is the world-frame
/// axis-angle of R_i R_{i-1}^T times fps. Frame 0 is zero by convention.
inline Kinematics velocities_accelerations(std::span<const Vec3> roots_left, std::span<const Vec3> roots_right,
                                           std::span<const Mat3> rots_left, std::span<const Mat3> rots_right,
                                           double fps) {
  const auto l = static_cast<Eigen::Index>(roots_left.size());
  if (l < 2) throw Error("velocities require at least 2 frames");
  Kinematics k{Eigen::MatrixXd::Zero(l, 18), Eigen::MatrixXd::Zero(l, 18)};
  for (Eigen::Index i = 1; i < l; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const Vec3 lin_l = (roots_left[u] - roots_left[u - 1]) * fps;
    const Vec3 lin_r = (roots_right[u] - roots_right[u - 1]) * fps;
    const Vec3 ang_l = so3_log(rots_left[u] * rots_left[u - 1].transpose()) * fps;
    const Vec3 ang_r = so3_log(rots_right[u] * rots_right[u - 1].transpose()) * fps;
    k.v.block<1, 3>(i, 0) = lin_l.transpose();
    k.v.block<1, 3>(i, 3) = ang_l.transpose();
    k.v.block<1, 3>(i, 6) = lin_r.transpose();
    k.v.block<1, 3>(i, 9) = ang_r.transpose();
    k.v.block<1, 3>(i, 12) = (lin_r - lin_l).transpose();
    k.v.block<1, 3>(i, 15) = (ang_r - ang_l).transpose();
  }
  for (Eigen::Index i = 1; i < l; ++i) k.a.row(i) = (k.v.row(i) - k.v.row(i - 1)) * fps;
  return k;
}

inline CanonicalHOI canonicalize(const InteractionSequence& seq, double tau = 0.01) {
  seq.validate();
  const std::size_t l = seq.length();
  CanonicalHOI out{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), layout::kFrameDim)};
  std::vector<Vec3> root_l(l), root_r(l);
  std::vector<Mat3> rot_l(l), rot_r(l);
  for (std::size_t i = 0; i < l; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Joints42 j = frame_joints(seq.hands, i);
    const auto world = posed_points(seq.geometry, seq.object.pose(i));
    for (int k = 0; k < 2 * kNumJoints; ++k) out.frames.block<1, 3>(row, 3 * k) = j[k].transpose();
    const auto flags = contact_flags(j, world, tau);
    for (int k = 0; k < layout::kCDim; ++k) out.frames(row, layout::kC + k) = flags[k];
    out.frames.block<1, layout::kFDim>(row, layout::kF) = offsets(j, world).transpose();
    root_l[i] = j[layout::kLeftWrist];
    root_r[i] = j[layout::kRightWrist];
    rot_l[i] = seq.hands.left[i].rotation().matrix();
    rot_r[i] = seq.hands.right[i].rotation().matrix();
  }
  const auto kin = velocities_accelerations(root_l, root_r, rot_l, rot_r, seq.fps);
  out.frames.middleCols(layout::kV, layout::kVDim) = kin.v;
  out.frames.middleCols(layout::kA, layout::kADim) = kin.a;
  return out;
}

/// Quantities recomputed from generated joints and the object motion.
struct Recanonicalized {
  Eigen::MatrixXd offsets;  // l x 129
  Eigen::MatrixXd v;        // l x 18
  Eigen::MatrixXd a;        // l x 18
  std::vector<std::array<std::size_t, layout::kCDim>> nearest;  // frozen nearest-point indices
};

/// Recompute offsets, velocities and accelerations from joints alone. Hand
/// rotation per frame step comes from a rigid fit of the five MCP joints.
inline Recanonicalized recanonicalize(const Eigen::MatrixXd& joints, const ObjectMotion& object,
                                      const PointCloud& geom, double fps) {
  const Eigen::Index l = joints.rows();
  if (joints.cols() != layout::kJDim) throw Error("recanonicalize expects l x 126 joints");
  if (static_cast<std::size_t>(l) != object.size()) throw Error("joint and object lengths differ");
  if (l < 2) throw Error("recanonicalize requires at least 2 frames");
  Recanonicalized out{Eigen::MatrixXd::Zero(l, layout::kFDim), Eigen::MatrixXd::Zero(l, 18),
                      Eigen::MatrixXd::Zero(l, 18), {}};
  out.nearest.resize(static_cast<std::size_t>(l));
  std::vector<Joints42> frames(static_cast<std::size_t>(l));
  for (Eigen::Index i = 0; i < l; ++i) {
    const auto u = static_cast<std::size_t>(i);
    frames[u] = joints_from_row(joints.row(i));
    const auto world = posed_points(geom, object.pose(u));
    out.offsets.row(i) = offsets(frames[u], world, &out.nearest[u]).transpose();
  }
  auto mcp_fit = [&](std::size_t i, int base) {
    std::array<Vec3, 5> src, dst;
    for (int k = 0; k < 5; ++k) {
      src[k] = frames[i - 1][base + kMcpJoints[k]];
      dst[k] = frames[i][base + kMcpJoints[k]];
    }
    // noisy predictions can collapse the MCP set; treat that step as no rotation
    try {
      return so3_log(kabsch_align(src, dst).rotation.matrix());
    } catch (const Error&) {
      return Vec3(Vec3::Zero());
    }
  };
  for (Eigen::Index i = 1; i < l; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const Vec3 lin_l = (frames[u][layout::kLeftWrist] - frames[u - 1][layout::kLeftWrist]) * fps;
    const Vec3 lin_r = (frames[u][layout::kRightWrist] - frames[u - 1][layout::kRightWrist]) * fps;
    const Vec3 ang_l = mcp_fit(u, 0) * fps;
    const Vec3 ang_r = mcp_fit(u, kNumJoints) * fps;
    out.v.block<1, 3>(i, 0) = lin_l.transpose();
    out.v.block<1, 3>(i, 3) = ang_l.transpose();
    out.v.block<1, 3>(i, 6) = lin_r.transpose();
    out.v.block<1, 3>(i, 9) = ang_r.transpose();
    out.v.block<1, 3>(i, 12) = (lin_r - lin_l).transpose();
    out.v.block<1, 3>(i, 15) = (ang_r - ang_l).transpose();
  }
  for (Eigen::Index i = 1; i < l; ++i) out.a.row(i) = (out.v.row(i) - out.v.row(i - 1)) * fps;
  return out;
}

/// Vector-Jacobian product of recanonicalize w.r.t. the joints with nearest
/// indices and MCP rotations held fixed.
inline Eigen::MatrixXd recanonicalize_vjp(const Eigen::MatrixXd& grad_offsets, const Eigen::MatrixXd& grad_v,
                                          const Eigen::MatrixXd& grad_a, double fps) {
  const Eigen::Index l = grad_offsets.rows();
  Eigen::MatrixXd gj = Eigen::MatrixXd::Zero(l, layout::kJDim);
  // offsets: F_j = p* - J_j ; inter-wrist = J_rw - J_lw
  gj -= grad_offsets.leftCols(layout::kJDim);
  gj.middleCols(3 * layout::kRightWrist, 3) += grad_offsets.middleCols(126, 3);
  gj.middleCols(3 * layout::kLeftWrist, 3) -= grad_offsets.middleCols(126, 3);
  // a_i = (v_i - v_{i-1}) fps for i >= 1
  Eigen::MatrixXd gv = grad_v;
  for (Eigen::Index i = 1; i < l; ++i) {
    gv.row(i) += fps * grad_a.row(i);
    gv.row(i - 1) -= fps * grad_a.row(i);
  }
  gv.row(0).setZero();  // v_0 is a constant
  // linear parts only; angular parts are stop-gradient
  for (Eigen::Index i = 1; i < l; ++i) {
    const Eigen::RowVector3d gl = gv.block<1, 3>(i, 0) - gv.block<1, 3>(i, 12);
    const Eigen::RowVector3d gr = gv.block<1, 3>(i, 6) + gv.block<1, 3>(i, 12);
    gj.block<1, 3>(i, 3 * layout::kLeftWrist) += fps * gl;
    gj.block<1, 3>(i - 1, 3 * layout::kLeftWrist) -= fps * gl;
    gj.block<1, 3>(i, 3 * layout::kRightWrist) += fps * gr;
    gj.block<1, 3>(i - 1, 3 * layout::kRightWrist) -= fps * gr;
  }
  return gj;
}

}  // namespace ghoi
