#pragma once

#include "ghoi/diffusion.hpp"
#include "ghoi/hoi_repr.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ghoi {

inline constexpr int kObjectDim = 9;  // rot6d 6 + translation 3

struct Stage1Weights {
  double simple = 10.0;
  double trans = 30.0;
  double verts = 10.0;
  double smooth = 1.0;
};

struct Stage2Weights {
  double simple = 100.0;
  double bone = 100.0;
};

/// l x 9 object rows [rot6d | trans].
inline MatrixXd object_rows(const ObjectMotion& o) {
  MatrixXd x(static_cast<Eigen::Index>(o.size()), kObjectDim);
  for (std::size_t i = 0; i < o.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int k = 0; k < 6; ++k) x(r, k) = o.rot6d[i][static_cast<std::size_t>(k)];
    x.block<1, 3>(r, 6) = o.trans[i].transpose();
  }
  return x;
}

inline ObjectMotion object_from_rows(const MatrixXd& x) {
  if (x.cols() != kObjectDim) throw Error("object rows must have 9 columns");
  ObjectMotion o;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::array<double, 6> a;
    for (int k = 0; k < 6; ++k) a[static_cast<std::size_t>(k)] = x(r, k);
    // re-orthonormalize so stored rotations are valid
    o.push_back(RigidTransform(Rotation::from_6d(a), x.block<1, 3>(r, 6).transpose()));
  }
  return o;
}

struct Stage1Terms {
  double trans = 0.0;   // sum over frames of |T - T_hat|
  double verts = 0.0;   // sum over frames of the Frobenius norm of the posed-vertex error
  double smooth = 0.0;  // |x_hat[1:] - x_hat[:-1]| over the whole tensor
  MatrixXd grad_trans, grad_verts, grad_smooth;  // d term / d pred rows
};

namespace detail {

inline Eigen::Matrix<double, 3, Eigen::Dynamic> point_matrix(const PointCloud& geom) {
  Eigen::Matrix<double, 3, Eigen::Dynamic> p(3, static_cast<Eigen::Index>(geom.size()));
  for (std::size_t k = 0; k < geom.size(); ++k) p.col(static_cast<Eigen::Index>(k)) = geom.points[k];
  return p;
}

inline std::array<double, 6> row6(const MatrixXd& x, Eigen::Index r) {
  std::array<double, 6> a;
  for (int k = 0; k < 6; ++k) a[static_cast<std::size_t>(k)] = x(r, k);
  return a;
}

}  // namespace detail

/// Geometric stage-1 terms on physical rows with gradients w.r.t. pred.
inline Stage1Terms stage1_terms(const MatrixXd& pred, const MatrixXd& gt, const PointCloud& geom) {
  if (pred.rows() != gt.rows() || pred.cols() != kObjectDim || gt.cols() != kObjectDim)
    throw Error("stage-1 loss length mismatch");
  if (geom.empty()) throw Error("empty geometry");
  const Eigen::Index l = pred.rows();
  Stage1Terms s;
  s.grad_trans = MatrixXd::Zero(l, kObjectDim);
  s.grad_verts = MatrixXd::Zero(l, kObjectDim);
  s.grad_smooth = MatrixXd::Zero(l, kObjectDim);
  const auto P = detail::point_matrix(geom);
  for (Eigen::Index i = 0; i < l; ++i) {
    const Vec3 dt = pred.block<1, 3>(i, 6).transpose() - gt.block<1, 3>(i, 6).transpose();
    const double n = dt.norm();
    s.trans += n;
    if (n > 0.0) s.grad_trans.block<1, 3>(i, 6) = (dt / n).transpose();

    const auto a = detail::row6(pred, i);
    const Mat3 Rh = Rotation::from_6d(a).matrix();
    const Mat3 R = Rotation::from_6d(detail::row6(gt, i)).matrix();
    Eigen::Matrix<double, 3, Eigen::Dynamic> E = (Rh - R) * P;
    E.colwise() += dt;
    const double f = E.norm();
    s.verts += f;
    if (f > 0.0) {
      const Eigen::Matrix<double, 3, Eigen::Dynamic> G = E / f;
      s.grad_verts.block<1, 3>(i, 6) = G.rowwise().sum().transpose();
      const Mat3 dR = G * P.transpose();
      const Eigen::Matrix<double, 9, 1> vec = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(dR.data());
      const Eigen::Matrix<double, 6, 1> ga = rot6d_jacobian(a).transpose() * vec;
      s.grad_verts.block<1, 6>(i, 0) = ga.transpose();
    }
  }
  if (l >= 2) {
    const MatrixXd d = pred.bottomRows(l - 1) - pred.topRows(l - 1);
    const double n = d.norm();
    s.smooth = n;
    if (n > 0.0) {
      s.grad_smooth.bottomRows(l - 1) += d / n;
      s.grad_smooth.topRows(l - 1) -= d / n;
    }
  }
  return s;
}

struct LossBreakdown {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;

  double term(const std::string& name) const {
    for (const auto& [k, v] : terms)
      if (k == name) return v;
    throw Error("unknown loss term " + name);
  }
};

/// Stage-1 objective on object motions; the simple term compares the raw rows.
inline LossBreakdown loss_stage1(const ObjectMotion& pred, const ObjectMotion& gt, const PointCloud& geom,
                                 const Stage1Weights& w = {}) {
  if (pred.size() != gt.size()) throw Error("stage-1 loss length mismatch");
  const MatrixXd xp = object_rows(pred), xg = object_rows(gt);
  const auto s = stage1_terms(xp, xg, geom);
  LossBreakdown b;
  const double simple = loss_simple(xg, xp);
  b.terms = {{"simple", simple}, {"trans", s.trans}, {"verts", s.verts}, {"smooth", s.smooth}};
  b.total = w.simple * simple + w.trans * s.trans + w.verts * s.verts + w.smooth * s.smooth;
  return b;
}

/// Bone lengths for both hands per frame, l x 40, from the J slice.
inline MatrixXd bone_length_rows(const MatrixXd& frames) {
  if (frames.cols() < layout::kJDim) throw Error("frames lack the joint slice");
  MatrixXd b(frames.rows(), 2 * kNumBones);
  for (Eigen::Index i = 0; i < frames.rows(); ++i)
    for (int h = 0; h < 2; ++h)
      for (int e = 0; e < kNumBones; ++e) {
        const int j = h * kNumJoints + e + 1;
        const int p = h * kNumJoints + skeleton::kParents[static_cast<std::size_t>(e + 1)];
        b(i, h * kNumBones + e) = (frames.block<1, 3>(i, 3 * j) - frames.block<1, 3>(i, 3 * p)).norm();
      }
  return b;
}

struct BoneTerm {
  double value = 0.0;
  MatrixXd grad;  // w.r.t. pred frames (only J columns nonzero)
};

/// |B(J) - B(J_hat)| over the whole tensor, with gradient w.r.t. J_hat.
inline BoneTerm bone_term(const MatrixXd& pred, const MatrixXd& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) throw Error("stage-2 loss shape mismatch");
  const MatrixXd bp = bone_length_rows(pred), bg = bone_length_rows(gt);
  const MatrixXd diff = bp - bg;
  BoneTerm out{diff.norm(), MatrixXd::Zero(pred.rows(), pred.cols())};
  if (out.value == 0.0) return out;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (int h = 0; h < 2; ++h)
      for (int e = 0; e < kNumBones; ++e) {
        const double len = bp(i, h * kNumBones + e);
        if (len <= 0.0) continue;
        const int j = h * kNumJoints + e + 1;
        const int p = h * kNumJoints + skeleton::kParents[static_cast<std::size_t>(e + 1)];
        const Eigen::RowVector3d dir = (pred.block<1, 3>(i, 3 * j) - pred.block<1, 3>(i, 3 * p)) / len;
        const double c = diff(i, h * kNumBones + e) / out.value;
        out.grad.block<1, 3>(i, 3 * j) += c * dir;
        out.grad.block<1, 3>(i, 3 * p) -= c * dir;
      }
  return out;
}

inline LossBreakdown loss_stage2(const CanonicalHOI& pred, const CanonicalHOI& gt, const Stage2Weights& w = {}) {
  if (pred.frames.rows() != gt.frames.rows() || pred.frames.cols() != gt.frames.cols())
    throw Error("stage-2 loss shape mismatch");
  const double simple = loss_simple(gt.frames, pred.frames);
  const double bone = bone_term(pred.frames, gt.frames).value;
  LossBreakdown b;
  b.terms = {{"simple", simple}, {"bone", bone}};
  b.total = w.simple * simple + w.bone * bone;
  return b;
}

}  // namespace ghoi
