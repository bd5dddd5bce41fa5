#pragma once

#include "ghoi/geometry.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace ghoi {

inline constexpr int kNumJoints = 21;
inline constexpr int kNumBones = 20;
inline constexpr int kNumArticulated = 15;
inline constexpr int kThetaDim = 45;
inline constexpr int kBetaDim = 10;
inline constexpr int kHandParamDim = 61;  // axis-angle 3 + trans 3 + theta 45 + beta 10
inline constexpr std::array<int, 5> kMcpJoints{1, 5, 9, 13, 17};

using Joints21 = std::array<Vec3, kNumJoints>;

// Canonical right-hand skeleton, version 1. Hand frame: fingers along +Z,
// palm normal along -Y, thumb on +X. Joint order is
// [wrist, thumb(MCP,PIP,DIP,TIP), index(...), middle(...), ring(...), pinky(...)].
// The same table ships as assets/skeleton_v1.json.
namespace skeleton {

inline constexpr int kVersion = 1;

inline constexpr std::array<std::string_view, kNumJoints> kNames{
    "wrist",
    "thumb_mcp", "thumb_pip", "thumb_dip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip"};

inline constexpr std::array<int, kNumJoints> kParents{
    -1, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 0, 13, 14, 15, 0, 17, 18, 19};

// rest offset of each joint from its parent, meters, parent rest frame
inline constexpr std::array<std::array<double, 3>, kNumJoints> kRestOffsets{{
    {0.0, 0.0, 0.0},
    {0.028, -0.012, 0.028}, {0.010, 0.0, 0.032}, {0.006, 0.0, 0.028}, {0.004, 0.0, 0.024},
    {0.022, 0.0, 0.090}, {0.0, 0.0, 0.040}, {0.0, 0.0, 0.024}, {0.0, 0.0, 0.020},
    {0.002, 0.0, 0.094}, {0.0, 0.0, 0.044}, {0.0, 0.0, 0.027}, {0.0, 0.0, 0.021},
    {-0.018, 0.0, 0.088}, {0.0, 0.0, 0.040}, {0.0, 0.0, 0.025}, {0.0, 0.0, 0.020},
    {-0.036, 0.0, 0.078}, {0.0, 0.0, 0.030}, {0.0, 0.0, 0.019}, {0.0, 0.0, 0.018},
}};

inline constexpr int finger_of(int joint) { return joint == 0 ? -1 : (joint - 1) / 4; }
inline constexpr int segment_of(int joint) { return joint == 0 ? -1 : (joint - 1) % 4; }  // 0=MCP .. 3=TIP

/// Articulated slot (0..14) driven by this joint's rotation, or -1 for wrist/tips.
inline constexpr int articulated_slot(int joint) {
  const int s = segment_of(joint);
  return (s < 0 || s == 3) ? -1 : finger_of(joint) * 3 + s;
}

}  // namespace skeleton

/// Shape parameters: [global scale, palm width, 5 finger length scales, 3 reserved].
struct HandShape {
  std::array<double, kBetaDim> beta{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  bool left = false;

  double scale() const { return beta[0]; }

  void validate() const {
    for (double b : beta)
      if (!(b >= 0.5 && b <= 2.0)) throw Error("hand shape scale outside [0.5, 2.0]");
  }

  /// Rest offsets from parent after applying shape and handedness.
  std::array<Vec3, kNumJoints> offsets() const {
    std::array<Vec3, kNumJoints> out;
    for (int j = 0; j < kNumJoints; ++j) {
      const auto& o = skeleton::kRestOffsets[j];
      Vec3 v(o[0], o[1], o[2]);
      const int seg = skeleton::segment_of(j);
      if (seg == 0) v.x() *= beta[1];
      if (seg > 0) v *= beta[2 + skeleton::finger_of(j)];
      v *= beta[0];
      if (left) v.x() = -v.x();
      out[j] = v;
    }
    return out;
  }

  /// Rest joint positions in the hand frame (wrist at the origin).
  Joints21 rest_joints() const {
    const auto off = offsets();
    Joints21 j;
    j[0] = Vec3::Zero();
    for (int k = 1; k < kNumJoints; ++k) j[k] = j[skeleton::kParents[k]] + off[k];
    return j;
  }
};

/// Global pose plus 15 joints x (flexion X, abduction Y, twist Z) Euler angles.
struct HandPose {
  Vec3 global_rot = Vec3::Zero();  // axis-angle
  Vec3 global_trans = Vec3::Zero();
  std::array<double, kThetaDim> theta{};

  Rotation rotation() const { return Rotation::from_axis_angle(global_rot); }

  double& angle(int slot, int axis) { return theta[static_cast<std::size_t>(slot * 3 + axis)]; }
  double angle(int slot, int axis) const { return theta[static_cast<std::size_t>(slot * 3 + axis)]; }
};

/// 61-dim MANO-layout parameter vector.
inline std::array<double, kHandParamDim> to_params(const HandPose& pose, const HandShape& shape) {
  std::array<double, kHandParamDim> p{};
  for (int i = 0; i < 3; ++i) {
    p[i] = pose.global_rot[i];
    p[3 + i] = pose.global_trans[i];
  }
  for (int i = 0; i < kThetaDim; ++i) p[6 + i] = pose.theta[i];
  for (int i = 0; i < kBetaDim; ++i) p[6 + kThetaDim + i] = shape.beta[i];
  return p;
}

inline HandPose pose_from_params(const std::array<double, kHandParamDim>& p) {
  HandPose pose;
  for (int i = 0; i < 3; ++i) {
    pose.global_rot[i] = p[i];
    pose.global_trans[i] = p[3 + i];
  }
  for (int i = 0; i < kThetaDim; ++i) pose.theta[i] = p[6 + i];
  return pose;
}

inline std::array<double, kBetaDim> beta_from_params(const std::array<double, kHandParamDim>& p) {
  std::array<double, kBetaDim> b{};
  for (int i = 0; i < kBetaDim; ++i) b[i] = p[6 + kThetaDim + i];
  return b;
}

/// Per-axis (lo, hi) radians for each articulated joint.
struct AngleLimits {
  std::array<std::array<std::pair<double, double>, 3>, kNumArticulated> range{};

  AngleLimits() {
    for (int slot = 0; slot < kNumArticulated; ++slot) {
      const bool mcp = slot % 3 == 0;
      range[slot][0] = {-0.2, 1.8};
      range[slot][1] = mcp ? std::pair{-0.35, 0.35} : std::pair{-0.05, 0.05};
      range[slot][2] = {-0.05, 0.05};
    }
  }

  bool contains(const HandPose& pose) const {
    for (int s = 0; s < kNumArticulated; ++s)
      for (int a = 0; a < 3; ++a) {
        const double v = pose.angle(s, a);
        if (v < range[s][a].first || v > range[s][a].second) return false;
      }
    return true;
  }
};

inline HandPose clamp_pose_angles(HandPose pose, const AngleLimits& limits) {
  for (int s = 0; s < kNumArticulated; ++s)
    for (int a = 0; a < 3; ++a)
      pose.angle(s, a) = std::clamp(pose.angle(s, a), limits.range[s][a].first, limits.range[s][a].second);
  return pose;
}

namespace detail {

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

inline Mat3 drot(int axis, double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 d = Mat3::Zero();
  switch (axis) {
    case 0: d << 0, 0, 0, 0, -s, -c, 0, c, -s; break;
    case 1: d << -s, 0, c, 0, 0, 0, -c, 0, -s; break;
    default: d << -s, -c, 0, c, -s, 0, 0, 0, 0; break;
  }
  return d;
}

/// Local joint rotation, XYZ order: Rx * Ry * Rz.
inline Mat3 euler_xyz(double x, double y, double z) { return rot_x(x) * rot_y(y) * rot_z(z); }

struct Chain {
  Joints21 local;                         // hand-frame positions before the global transform
  std::array<Mat3, kNumJoints> frames;    // hand-frame orientation of each joint
  std::array<Mat3, kNumJoints> rel;       // joint-local rotation (identity for wrist/tips)
  std::array<Vec3, kNumJoints> offsets;
};

inline Chain evaluate_chain(const HandShape& shape, const HandPose& pose) {
  Chain c;
  c.offsets = shape.offsets();
  c.local[0] = Vec3::Zero();
  c.frames[0] = Mat3::Identity();
  c.rel[0] = Mat3::Identity();
  for (int j = 1; j < kNumJoints; ++j) {
    const int parent = skeleton::kParents[j];
    c.local[j] = c.local[parent] + c.frames[parent] * c.offsets[j];
    const int slot = skeleton::articulated_slot(j);
    c.rel[j] = slot < 0 ? Mat3::Identity()
                        : euler_xyz(pose.angle(slot, 0), pose.angle(slot, 1), pose.angle(slot, 2));
    c.frames[j] = c.frames[parent] * c.rel[j];
  }
  return c;
}

}  // namespace detail

/// Joint positions: chain evaluated wrist to tips, global rotation and translation applied last.
inline Joints21 forward_kinematics(const HandShape& shape, const HandPose& pose) {
  const auto chain = detail::evaluate_chain(shape, pose);
  const Mat3 r = pose.rotation().matrix();
  Joints21 out;
  for (int j = 0; j < kNumJoints; ++j) out[j] = r * chain.local[j] + pose.global_trans;
  return out;
}

/// d(joints)/d(params), rows = 21x3 stacked joints, columns = [axis-angle 3, trans 3, theta 45].
using FkJacobian = Eigen::Matrix<double, 3 * kNumJoints, 6 + kThetaDim>;

inline FkJacobian forward_kinematics_jacobian(const HandShape& shape, const HandPose& pose) {
  const auto chain = detail::evaluate_chain(shape, pose);
  const Mat3 r = pose.rotation().matrix();
  const Mat3 jl = so3_left_jacobian(pose.global_rot);
  FkJacobian jac = FkJacobian::Zero();
  for (int j = 0; j < kNumJoints; ++j) {
    jac.block<3, 3>(3 * j, 0) = -skew(r * chain.local[j]) * jl;
    jac.block<3, 3>(3 * j, 3) = Mat3::Identity();
  }
  for (int j = 1; j < kNumJoints; ++j) {
    const int slot = skeleton::articulated_slot(j);
    if (slot < 0) continue;
    const Mat3& parent_frame = chain.frames[skeleton::kParents[j]];
    const double ax = pose.angle(slot, 0), ay = pose.angle(slot, 1), az = pose.angle(slot, 2);
    const std::array<Mat3, 3> d_rel{
        detail::drot(0, ax) * detail::rot_y(ay) * detail::rot_z(az),
        detail::rot_x(ax) * detail::drot(1, ay) * detail::rot_z(az),
        detail::rot_x(ax) * detail::rot_y(ay) * detail::drot(2, az)};
    for (int axis = 0; axis < 3; ++axis) {
      Mat3 d_frame = parent_frame * d_rel[axis];
      Vec3 d_pos = Vec3::Zero();
      // descendants of j within the same finger are j+1 .. tip
      const int tip = j + (3 - skeleton::segment_of(j));
      for (int k = j + 1; k <= tip; ++k) {
        d_pos += d_frame * chain.offsets[k];
        jac.block<3, 1>(3 * k, 6 + slot * 3 + axis) = r * d_pos;
        d_frame = d_frame * chain.rel[k];
      }
    }
  }
  return jac;
}

/// Skeleton edge lengths, edge k connects joint k+1 to its parent.
inline std::array<double, kNumBones> bone_lengths(const Joints21& joints) {
  std::array<double, kNumBones> out{};
  for (int k = 1; k < kNumJoints; ++k) out[k - 1] = (joints[k] - joints[skeleton::kParents[k]]).norm();
  return out;
}

enum class SurfaceMode { Capsule, Joints };

inline double capsule_radius(const HandShape& shape) { return 0.008 * shape.scale(); }

/// Points on capsules swept along each bone. Joints mode returns the 21 joints.
inline std::vector<Vec3> sample_hand_surface(const HandShape& shape, const HandPose& pose, int m,
                                             std::uint64_t seed, SurfaceMode mode = SurfaceMode::Capsule) {
  if (m < kNumJoints) throw Error("sample_hand_surface requires m >= 21");
  const auto joints = forward_kinematics(shape, pose);
  if (mode == SurfaceMode::Joints) {
    std::vector<Vec3> out(joints.begin(), joints.end());
    for (int i = kNumJoints; i < m; ++i) out.push_back(joints[static_cast<std::size_t>(i % kNumJoints)]);
    return out;
  }
  const auto lengths = bone_lengths(joints);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick_bone(lengths.begin(), lengths.end());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double radius = capsule_radius(shape);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const int child = pick_bone(rng) + 1;
    const Vec3& a = joints[skeleton::kParents[child]];
    const Vec3& b = joints[child];
    const double t = uni(rng);
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    const double n = dir.norm();
    dir = n > 0.0 ? Vec3(dir / n) : Vec3::UnitX();
    out.push_back(a + t * (b - a) + radius * dir);
  }
  return out;
}

enum class FitMethod { GaussNewton, GradientDescent };

struct FitOptions {
  int iterations = 500;
  double step = 0.05;
  FitMethod method = FitMethod::GaussNewton;
  AngleLimits limits{};
  double tolerance = 1e-12;
};

struct FitResult {
  HandPose pose;
  double loss = 0.0;  // ||J - FK(pose)||
  int iterations = 0;
};

/// Raised when the fit loss rises for 10 consecutive iterations.
class FitDivergence : public Error {
 public:
  FitDivergence(HandPose best, double best_loss)
      : Error("pose fit diverged"), best_pose(best), best_loss(best_loss) {}
  HandPose best_pose;
  double best_loss;
};

namespace detail {

inline Eigen::Matrix<double, 3 * kNumJoints, 1> joint_residual(const Joints21& target, const Joints21& j) {
  Eigen::Matrix<double, 3 * kNumJoints, 1> r;
  for (int k = 0; k < kNumJoints; ++k) r.segment<3>(3 * k) = target[k] - j[k];
  return r;
}

}  // namespace detail

/// Rigid MCP alignment for the global transform, then projected descent on theta
/// with the angle limits enforced at the end of every iteration.
inline FitResult fit_pose_to_joints(const Joints21& target, const HandShape& shape, const HandPose& init,
                                    const FitOptions& opt = {}) {
  for (const auto& p : target)
    if (!p.allFinite()) throw Error("non-finite fit target");

  HandPose pose = clamp_pose_angles(init, opt.limits);
  {
    const auto rest = shape.rest_joints();
    std::array<Vec3, 5> src, dst;
    for (int i = 0; i < 5; ++i) {
      src[i] = rest[kMcpJoints[i]];
      dst[i] = target[kMcpJoints[i]];
    }
    const auto t = kabsch_align(src, dst);
    pose.global_rot = t.rotation.to_axis_angle();
    pose.global_trans = t.translation;
  }

  auto residual = detail::joint_residual(target, forward_kinematics(shape, pose));
  double loss = residual.norm();
  HandPose best = pose;
  double best_loss = loss;
  int rising = 0;
  double damping = 1e-6;
  int it = 0;
  for (; it < opt.iterations && loss > opt.tolerance; ++it) {
    const FkJacobian jac = forward_kinematics_jacobian(shape, pose);
    const auto jt = jac.rightCols<kThetaDim>();
    Eigen::Matrix<double, kThetaDim, 1> delta;
    if (opt.method == FitMethod::GaussNewton) {
      Eigen::Matrix<double, kThetaDim, kThetaDim> h = jt.transpose() * jt;
      h.diagonal().array() += damping * (1.0 + h.diagonal().array());
      delta = h.ldlt().solve(jt.transpose() * residual);
    } else {
      // gradient of ||r|| w.r.t. theta is -J^T r / ||r||
      delta = opt.step * jt.transpose() * residual / std::max(loss, 1e-300);
    }
    HandPose next = pose;
    for (int i = 0; i < kThetaDim; ++i) next.theta[i] += delta[i];
    next = clamp_pose_angles(next, opt.limits);
    auto next_res = detail::joint_residual(target, forward_kinematics(shape, next));
    const double next_loss = next_res.norm();
    if (opt.method == FitMethod::GaussNewton) {
      // damped steps are only taken when they improve the loss
      if (!(next_loss < loss)) {
        if (damping >= 1e6) break;
        damping = std::min(damping * 10.0, 1e6);
        continue;
      }
      damping = std::max(damping / 3.0, 1e-9);
      const bool stalled = loss - next_loss < 1e-15 * (1.0 + loss);
      pose = next;
      residual = next_res;
      loss = next_loss;
      best = pose;
      best_loss = loss;
      if (stalled) {
        ++it;
        break;
      }
      continue;
    }
    rising = next_loss > loss ? rising + 1 : 0;
    pose = next;
    residual = next_res;
    loss = next_loss;
    if (loss < best_loss) {
      best_loss = loss;
      best = pose;
    }
    if (rising >= 10) throw FitDivergence(best, best_loss);
  }
  return {best, best_loss, it};
}

}  // namespace ghoi
