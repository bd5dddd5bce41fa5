#pragma once

#include "ghoi/autodiff.hpp"
#include "ghoi/hoi_repr.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace ghoi {

// Per-point descriptor: [p 3 | n 3 | |p - c| 1 | radial dir 3 | embedding 6].
inline constexpr int kFixedFeatureDim = 10;
inline constexpr int kEmbedDim = 6;
inline constexpr int kFeatureDim = kFixedFeatureDim + kEmbedDim;
inline constexpr double kGazeMinDistance = 1e-3;

/// The geometric part of the descriptor, in the object frame.
inline Eigen::MatrixXd fixed_point_features(const PointCloud& geom) {
  if (geom.empty()) throw Error("empty geometry");
  const Vec3 c = geom.centroid();
  Eigen::MatrixXd f(static_cast<Eigen::Index>(geom.size()), kFixedFeatureDim);
  for (std::size_t k = 0; k < geom.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const Vec3 d = geom.points[k] - c;
    const double dist = d.norm();
    f.block<1, 3>(r, 0) = geom.points[k].transpose();
    f.block<1, 3>(r, 3) = geom.normals[k].transpose();
    f(r, 6) = dist;
    f.block<1, 3>(r, 7) = (dist > 0.0 ? Vec3(d / dist) : Vec3::Zero()).transpose();
  }
  return f;
}

/// Trainable embedding: a linear projection of the fixed descriptor.
struct PointEmbedding {
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(kFixedFeatureDim, kEmbedDim);

  static PointEmbedding random(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(kFixedFeatureDim)));
    PointEmbedding e;
    for (Eigen::Index i = 0; i < e.weights.size(); ++i) e.weights(i) = g(rng);
    return e;
  }
};

struct ObjectPointFeatures {
  Eigen::MatrixXd values;  // N x 16

  Eigen::Index size() const { return values.rows(); }
};

inline ObjectPointFeatures point_features(const PointCloud& geom, const PointEmbedding& embed) {
  const Eigen::MatrixXd fixed = fixed_point_features(geom);
  ObjectPointFeatures out{Eigen::MatrixXd(fixed.rows(), kFeatureDim)};
  out.values.leftCols(kFixedFeatureDim) = fixed;
  out.values.rightCols(kEmbedDim) = fixed * embed.weights;
  return out;
}

struct GazeMatch {
  std::size_t index = 0;  // nearest object point
  double weight = 0.0;    // 1 / max(distance, d_min)
};

/// Nearest posed object point per gaze sample.
inline std::vector<GazeMatch> match_gaze(const GazeSequence& gaze, const ObjectMotion& object, const PointCloud& geom,
                                         double d_min = kGazeMinDistance) {
  if (geom.empty()) throw Error("empty geometry");
  if (object.size() != gaze.size()) throw Error("gaze and object lengths differ");
  std::vector<GazeMatch> out(gaze.size());
  for (std::size_t i = 0; i < gaze.size(); ++i) {
    const auto r = nearest_point(gaze[i], posed_points(geom, object.pose(i)));
    out[i] = {r.index, 1.0 / std::max(r.distance, d_min)};
  }
  return out;
}

inline Eigen::MatrixXd gaze_spatial_feature(const std::vector<GazeMatch>& matches, const ObjectPointFeatures& feats) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(matches.size()), feats.values.cols());
  for (std::size_t i = 0; i < matches.size(); ++i)
    f.row(static_cast<Eigen::Index>(i)) =
        matches[i].weight * feats.values.row(static_cast<Eigen::Index>(matches[i].index));
  return f;
}

inline Eigen::MatrixXd gaze_spatial_feature(const GazeSequence& gaze, const ObjectMotion& object,
                                            const ObjectPointFeatures& feats, const PointCloud& geom,
                                            double d_min = kGazeMinDistance) {
  return gaze_spatial_feature(match_gaze(gaze, object, geom, d_min), feats);
}

struct ConditionEncoder {
  Eigen::MatrixXd wq = Eigen::MatrixXd::Identity(kFeatureDim, kFeatureDim);
  Eigen::MatrixXd wk = Eigen::MatrixXd::Identity(kFeatureDim, kFeatureDim);
  Eigen::MatrixXd wv = Eigen::MatrixXd::Identity(kFeatureDim, kFeatureDim);

  static ConditionEncoder random(std::mt19937_64& rng, int d = kFeatureDim) {
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    ConditionEncoder e;
    for (auto* m : {&e.wq, &e.wk, &e.wv}) {
      m->resize(d, d);
      for (Eigen::Index i = 0; i < m->size(); ++i) (*m)(i) = g(rng);
    }
    return e;
  }

  void validate() const {
    if (!wq.allFinite() || !wk.allFinite() || !wv.allFinite()) throw Error("non-finite encoder weights");
  }
};

/// softmax(F Wq (F Wk)^T / sqrt(d)) F Wv
inline Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& f, const ConditionEncoder& enc) {
  if (f.rows() < 1) throw Error("attention needs at least one row");
  Eigen::MatrixXd logits = (f * enc.wq) * (f * enc.wk).transpose() / std::sqrt(static_cast<double>(f.cols()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    logits.row(r) = (logits.row(r).array() - logits.row(r).maxCoeff()).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

inline Eigen::MatrixXd self_attention(const Eigen::MatrixXd& f, const ConditionEncoder& enc) {
  return attention_weights(f, enc) * (f * enc.wv);
}

/// Tape form of self_attention, differentiable in every input.
inline ad::Var self_attention(ad::Tape& t, ad::Var f, ad::Var wq, ad::Var wk, ad::Var wv) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(t.value(f).cols()));
  const ad::Var q = t.matmul(f, wq);
  const ad::Var k = t.matmul(f, wk);
  const ad::Var v = t.matmul(f, wv);
  const ad::Var a = t.softmax_rows(t.scale(t.matmul_nt(q, k), inv));
  return t.matmul(a, v);
}

}  // namespace ghoi
