#pragma once

#include "ghoi/diffusion.hpp"
#include "ghoi/hoi_repr.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <string>

namespace ghoi {

enum class MixingMode { Deviation, Absolute };

struct GuidanceSpec {
  double lambda_k = 100.0;
  double lambda_c = 1000.0;
  double lambda_p = 100.0;
  double w = 0.99;
  double tau = 0.01;
  double eps = 1e-6;
  double eta = 0.001;
  double g_min = 1e-8;
  MixingMode mixing = MixingMode::Deviation;
  bool naive = false;        // additive gradient step instead of the spherical draw
  double naive_scale = 1.0;
  int every = 1;             // guide steps with t % every == 0
  int max_step = 0;          // guide only t <= max_step; 0 means all steps

  void validate() const {
    if (w < 0.0 || w > 1.0) throw Error("guidance rate must lie in [0, 1]");
    if (!(tau > 0.0) || !(eta > 0.0)) throw Error("tau and eta must be positive");
    if (!(eps > 0.0) || !(g_min > 0.0)) throw Error("eps and g_min must be positive");
    if (lambda_k < 0.0 || lambda_c < 0.0 || lambda_p < 0.0) throw Error("guidance weights must be non-negative");
    if (every < 1 || max_step < 0) throw Error("invalid guidance schedule");
  }

  bool active(int t) const { return t % every == 0 && (max_step == 0 || t <= max_step); }
};

inline json guidance_json(const GuidanceSpec& g) {
  return {{"lambda_k", g.lambda_k}, {"lambda_c", g.lambda_c}, {"lambda_p", g.lambda_p},
          {"w", g.w},               {"tau", g.tau},           {"eps", g.eps},
          {"eta", g.eta},           {"g_min", g.g_min},
          {"mixing", g.mixing == MixingMode::Deviation ? "deviation" : "absolute"},
          {"naive", g.naive},       {"naive_scale", g.naive_scale}, {"every", g.every},
          {"max_step", g.max_step}};
}

inline GuidanceSpec guidance_from(const json& j) {
  GuidanceSpec g;
  g.lambda_k = j.value("lambda_k", g.lambda_k);
  g.lambda_c = j.value("lambda_c", g.lambda_c);
  g.lambda_p = j.value("lambda_p", g.lambda_p);
  g.w = j.value("w", g.w);
  g.tau = j.value("tau", g.tau);
  g.eps = j.value("eps", g.eps);
  g.eta = j.value("eta", g.eta);
  g.g_min = j.value("g_min", g.g_min);
  const auto mix = j.value("mixing", std::string("deviation"));
  if (mix == "deviation")
    g.mixing = MixingMode::Deviation;
  else if (mix == "absolute")
    g.mixing = MixingMode::Absolute;
  else
    throw Error("unknown mixing mode: " + mix);
  g.naive = j.value("naive", g.naive);
  g.naive_scale = j.value("naive_scale", g.naive_scale);
  g.every = j.value("every", g.every);
  g.max_step = j.value("max_step", g.max_step);
  g.validate();
  return g;
}

/// A scalar with its gradient w.r.t. the l x 333 physical HOI tensor.
struct GuidanceValue {
  double value = 0.0;
  MatrixXd grad;
};

struct KinematicTargets {
  MatrixXd offsets;  // F~, l x 129
  MatrixXd v;        // v~, l x 18
  MatrixXd a;        // a~, l x 18
};

inline KinematicTargets kinematic_targets(const Recanonicalized& r) { return {r.offsets, r.v, r.a}; }

/// |F^ - F~| + |v^ - v~| + |a^ - a~| with whole-tensor L2 norms. Gradient is
/// w.r.t. the hat slices only (targets treated as constants).
inline GuidanceValue loss_kinematic(const MatrixXd& hoi, const KinematicTargets& tilde) {
  const Eigen::Index l = hoi.rows();
  if (hoi.cols() != layout::kFrameDim || tilde.offsets.rows() != l || tilde.offsets.cols() != layout::kFDim ||
      tilde.v.rows() != l || tilde.v.cols() != layout::kVDim || tilde.a.rows() != l || tilde.a.cols() != layout::kADim)
    throw Error("kinematic loss shape mismatch");
  GuidanceValue out{0.0, MatrixXd::Zero(l, layout::kFrameDim)};
  auto term = [&](int col, int width, const MatrixXd& target) {
    const MatrixXd d = hoi.middleCols(col, width) - target;
    const double n = d.norm();
    out.value += n;
    if (n > 0.0) out.grad.middleCols(col, width) = d / n;
  };
  term(layout::kF, layout::kFDim, tilde.offsets);
  term(layout::kV, layout::kVDim, tilde.v);
  term(layout::kA, layout::kADim, tilde.a);
  return out;
}

namespace detail {

struct SurfaceHit {
  Vec3 point;
  Vec3 normal;
  double distance;
};

inline std::vector<std::vector<SurfaceHit>> surface_hits(const MatrixXd& joints, const ObjectMotion& object,
                                                         const PointCloud& geom) {
  if (geom.empty()) throw Error("empty geometry");
  if (static_cast<std::size_t>(joints.rows()) != object.size()) throw Error("joint and object lengths differ");
  std::vector<std::vector<SurfaceHit>> hits(static_cast<std::size_t>(joints.rows()));
  for (Eigen::Index i = 0; i < joints.rows(); ++i) {
    const auto pose = object.pose(static_cast<std::size_t>(i));
    const auto world = posed_points(geom, pose);
    auto& h = hits[static_cast<std::size_t>(i)];
    h.reserve(2 * kNumJoints);
    for (int j = 0; j < 2 * kNumJoints; ++j) {
      const Vec3 q = joints.block<1, 3>(i, 3 * j).transpose();
      const auto r = nearest_point(q, world);
      h.push_back({world[r.index], pose.rotation * geom.normals[r.index], r.distance});
    }
  }
  return hits;
}

}  // namespace detail

/// Sum of near-contact distances over the count of near joints; the mask and
/// nearest points are frozen. Gradient is w.r.t. the joints (l x 126).
inline GuidanceValue loss_contact(const MatrixXd& joints, const ObjectMotion& object, const PointCloud& geom,
                                  double tau = 0.01, double eps = 1e-6) {
  const auto hits = detail::surface_hits(joints, object, geom);
  double num = 0.0, count = 0.0;
  for (const auto& frame : hits)
    for (const auto& h : frame)
      if (h.distance < tau) {
        num += h.distance;
        count += 1.0;
      }
  GuidanceValue out{num / (count + eps), MatrixXd::Zero(joints.rows(), joints.cols())};
  for (Eigen::Index i = 0; i < joints.rows(); ++i)
    for (int j = 0; j < 2 * kNumJoints; ++j) {
      const auto& h = hits[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (h.distance < tau && h.distance > 0.0) {
        const Vec3 q = joints.block<1, 3>(i, 3 * j).transpose();
        out.grad.block<1, 3>(i, 3 * j) = ((q - h.point) / h.distance / (count + eps)).transpose();
      }
    }
  return out;
}

/// Signed depth s = (J - p*) . n: positive outside, negative inside.
inline double penetration_signed(const Vec3& joint, const Vec3& surface, const Vec3& normal) {
  return (joint - surface).dot(normal);
}

/// -sum min(0, s + eta) over joints and frames, nearest points frozen.
inline GuidanceValue loss_penetration(const MatrixXd& joints, const ObjectMotion& object, const PointCloud& geom,
                                      double eta = 0.001) {
  const auto hits = detail::surface_hits(joints, object, geom);
  GuidanceValue out{0.0, MatrixXd::Zero(joints.rows(), joints.cols())};
  for (Eigen::Index i = 0; i < joints.rows(); ++i)
    for (int j = 0; j < 2 * kNumJoints; ++j) {
      const auto& h = hits[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const Vec3 q = joints.block<1, 3>(i, 3 * j).transpose();
      const double s = penetration_signed(q, h.point, h.normal);
      if (s + eta < 0.0) {
        out.value -= s + eta;
        out.grad.block<1, 3>(i, 3 * j) = -h.normal.transpose();
      }
    }
  return out;
}

struct GuidanceBreakdown {
  double total = 0.0;
  double kinematic = 0.0;
  double contact = 0.0;
  double penetration = 0.0;
  MatrixXd grad;  // d total / d hoi (l x 333)

  std::string describe() const {
    return "L_g=" + std::to_string(total) + " kinematic=" + std::to_string(kinematic) +
           " contact=" + std::to_string(contact) + " penetration=" + std::to_string(penetration);
  }
};

/// lambda_k L_kin + lambda_c L_contact + lambda_p L_pen on a physical HOI tensor.
/// The kinematic targets are recomputed from the tensor's own joints and
/// differentiated through their linear parts (recanonicalize_vjp).
inline GuidanceBreakdown total_guidance_loss(const MatrixXd& hoi, const ObjectMotion& object, const PointCloud& geom,
                                             double fps, const GuidanceSpec& spec) {
  if (hoi.cols() != layout::kFrameDim) throw Error("guidance expects l x 333 rows");
  const MatrixXd joints = hoi.leftCols(layout::kJDim);
  GuidanceBreakdown b;
  b.grad = MatrixXd::Zero(hoi.rows(), hoi.cols());
  if (spec.lambda_k > 0.0) {
    const auto re = recanonicalize(joints, object, geom, fps);
    const auto k = loss_kinematic(hoi, kinematic_targets(re));
    b.kinematic = k.value;
    b.grad += spec.lambda_k * k.grad;
    // targets depend on J: d/dJ of |hat - tilde(J)| = -vjp(residual direction)
    const MatrixXd gj = recanonicalize_vjp(-k.grad.middleCols(layout::kF, layout::kFDim),
                                           -k.grad.middleCols(layout::kV, layout::kVDim),
                                           -k.grad.middleCols(layout::kA, layout::kADim), fps);
    b.grad.leftCols(layout::kJDim) += spec.lambda_k * gj;
  }
  if (spec.lambda_c > 0.0) {
    const auto c = loss_contact(joints, object, geom, spec.tau, spec.eps);
    b.contact = c.value;
    b.grad.leftCols(layout::kJDim) += spec.lambda_c * c.grad;
  }
  if (spec.lambda_p > 0.0) {
    const auto p = loss_penetration(joints, object, geom, spec.eta);
    b.penetration = p.value;
    b.grad.leftCols(layout::kJDim) += spec.lambda_p * p.grad;
  }
  b.total = spec.lambda_k * b.kinematic + spec.lambda_c * b.contact + spec.lambda_p * b.penetration;
  return b;
}

/// Loss on the model's x_hat_0 (in the model's own units) with its gradient.
using LossClosure = std::function<GuidanceValue(const MatrixXd& x0)>;

/// Reverse-mode gradient of closure(model(x_t, t)) w.r.t. x_t.
inline MatrixXd grad_wrt_noisy(const MatrixXd& xt, int t, const X0Predictor& model, const LossClosure& closure,
                               double* loss_out = nullptr) {
  const auto pred = model.predict_with_vjp(xt, t);
  const auto l = closure(pred.x0);
  if (!std::isfinite(l.value) || !l.grad.allFinite())
    throw Error("non-finite guidance loss at step " + std::to_string(t) + ": L=" + std::to_string(l.value));
  MatrixXd g = pred.vjp(l.grad);
  if (!g.allFinite()) throw Error("non-finite guidance gradient at step " + std::to_string(t));
  if (loss_out) *loss_out = l.value;
  return g;
}

/// One spherical-Gaussian constrained draw around mu.
inline MatrixXd dsg_step(const MatrixXd& mu, double sigma, const MatrixXd& grad, double w, std::mt19937_64& rng,
                         MixingMode mode = MixingMode::Deviation, double g_min = 1e-8) {
  if (sigma < 0.0) throw Error("sigma must be non-negative");
  if (w < 0.0 || w > 1.0) throw Error("guidance rate must lie in [0, 1]");
  if (grad.rows() != mu.rows() || grad.cols() != mu.cols()) throw Error("gradient shape mismatch");
  if (sigma == 0.0) return mu;
  const MatrixXd z = gaussian(mu.rows(), mu.cols(), rng);
  const MatrixXd d_rand = sigma * z;
  const double gn = grad.norm();
  if (gn < g_min) return mu + d_rand;
  const double r = std::sqrt(static_cast<double>(mu.size())) * sigma;
  const MatrixXd d_guided = -r * grad / std::max(gn, g_min);
  MatrixXd D;
  if (mode == MixingMode::Deviation) {
    D = d_rand + w * (d_guided - d_rand);
  } else {
    // literal mixing of absolute states H^t and H^t*
    const MatrixXd h = mu + d_rand;
    D = h + w * ((mu + d_guided) - h);
  }
  const double dn = D.norm();
  if (dn == 0.0) return mu + d_rand;
  return mu + r * D / dn;
}

/// Sampler hook: spherical guided draw, or the naive additive step.
inline StepGuidance make_step_guidance(const GuidanceSpec& spec, LossClosure closure,
                                       std::function<void(int, double)> on_loss = {}) {
  spec.validate();
  StepGuidance g;
  g.active = [spec](int t) { return spec.active(t); };
  g.gradient = [closure, on_loss](const MatrixXd&, int t, const Prediction& pred) {
    const auto l = closure(pred.x0);
    if (!std::isfinite(l.value) || !l.grad.allFinite())
      throw Error("non-finite guidance loss at step " + std::to_string(t) + ": L=" + std::to_string(l.value));
    if (on_loss) on_loss(t, l.value);
    MatrixXd grad = pred.vjp(l.grad);
    if (!grad.allFinite()) throw Error("non-finite guidance gradient at step " + std::to_string(t));
    return grad;
  };
  g.draw = [spec](const MatrixXd& mu, double sigma, const MatrixXd& grad, std::mt19937_64& rng) {
    if (spec.naive) return MatrixXd(mu + sigma * gaussian(mu.rows(), mu.cols(), rng) - spec.naive_scale * grad);
    return dsg_step(mu, sigma, grad, spec.w, rng, spec.mixing, spec.g_min);
  };
  return g;
}

}  // namespace ghoi
