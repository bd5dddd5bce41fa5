#pragma once

#include "ghoi/guidance.hpp"
#include "ghoi/hoi_repr.hpp"
#include "ghoi/io.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ghoi {

/// World-frame joints of both hands, l x 126.
inline MatrixXd sequence_joints(const HandMotion& hands) {
  const std::size_t l = hands.left.size();
  if (hands.right.size() != l) throw Error("hand lengths differ");
  MatrixXd j(static_cast<Eigen::Index>(l), layout::kJDim);
  for (std::size_t i = 0; i < l; ++i) {
    const auto f = frame_joints(hands, i);
    for (int k = 0; k < 2 * kNumJoints; ++k) j.block<1, 3>(static_cast<Eigen::Index>(i), 3 * k) = f[k].transpose();
  }
  return j;
}

inline double mpjpe(const MatrixXd& pred, const MatrixXd& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() % 3 != 0 || pred.size() == 0)
    throw Error("mpjpe shape mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i)
    for (Eigen::Index c = 0; c < pred.cols(); c += 3) s += (pred.block<1, 3>(i, c) - gt.block<1, 3>(i, c)).norm();
  return 1000.0 * s / static_cast<double>(pred.size() / 3);
}

inline double mpvpe(const ObjectMotion& pred, const ObjectMotion& gt, const PointCloud& geom) {
  if (pred.size() != gt.size() || pred.size() == 0) throw Error("mpvpe length mismatch");
  if (geom.empty()) throw Error("empty geometry");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto a = pred.pose(i), b = gt.pose(i);
    for (const auto& p : geom.points) s += (a.apply(p) - b.apply(p)).norm();
  }
  return 1000.0 * s / static_cast<double>(pred.size() * geom.size());
}

inline double fol(const ObjectMotion& pred, const ObjectMotion& gt) {
  if (pred.size() == 0 || gt.size() == 0) throw Error("fol needs nonempty motions");
  return 1000.0 * (pred.trans.back() - gt.trans.back()).norm();
}

/// Percent of frames where some joint is strictly within tau of the posed surface.
inline double contact_frame_ratio(const MatrixXd& joints, const ObjectMotion& object, const PointCloud& geom,
                                  double tau = 0.01) {
  if (joints.rows() == 0) throw Error("contact ratio needs frames");
  const auto hits = detail::surface_hits(joints, object, geom);
  int frames = 0;
  for (const auto& f : hits)
    for (const auto& h : f)
      if (h.distance < tau) {
        ++frames;
        break;
      }
  return 100.0 * frames / static_cast<double>(joints.rows());
}

/// Frame-mean of the deepest joint penetration (mm), same sign convention as
/// loss_penetration.
inline double penetration_depth(const MatrixXd& joints, const ObjectMotion& object, const PointCloud& geom) {
  if (joints.rows() == 0) throw Error("penetration depth needs frames");
  const auto hits = detail::surface_hits(joints, object, geom);
  double s = 0.0;
  for (Eigen::Index i = 0; i < joints.rows(); ++i) {
    double worst = 0.0;
    for (int j = 0; j < 2 * kNumJoints; ++j) {
      const auto& h = hits[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const Vec3 q = joints.block<1, 3>(i, 3 * j).transpose();
      worst = std::max(worst, -penetration_signed(q, h.point, h.normal));
    }
    s += worst;
  }
  return 1000.0 * s / static_cast<double>(joints.rows());
}

// ---------------------------------------------------------------- FID

inline constexpr int kFidFeatureDim = 2 * layout::kFrameDim;

/// Temporal mean and (population) std of the canonical frames.
inline Eigen::RowVectorXd motion_features(const MatrixXd& frames) {
  if (frames.rows() == 0) throw Error("features need frames");
  Eigen::RowVectorXd f(2 * frames.cols());
  const Eigen::RowVectorXd mean = frames.colwise().mean();
  const MatrixXd centered = frames.rowwise() - mean;
  f << mean, (centered.colwise().squaredNorm() / static_cast<double>(frames.rows())).cwiseSqrt();
  return f;
}

/// Standardize both sets by the real set's per-column mean and std.
inline std::pair<MatrixXd, MatrixXd> standardize_by(const MatrixXd& real, const MatrixXd& gen) {
  if (real.cols() != gen.cols() || real.rows() == 0) throw Error("feature set mismatch");
  const Eigen::RowVectorXd mean = real.colwise().mean();
  Eigen::RowVectorXd sd = ((real.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(real.rows())).cwiseSqrt();
  for (Eigen::Index c = 0; c < sd.size(); ++c)
    if (!(sd(c) > 1e-12)) sd(c) = 1.0;
  auto apply = [&](const MatrixXd& x) { return MatrixXd((x.rowwise() - mean).array().rowwise() / sd.array()); };
  return {apply(real), apply(gen)};
}

namespace detail {

inline MatrixXd covariance(const MatrixXd& x) {
  if (x.rows() < 2) throw Error("covariance needs at least 2 samples");
  const MatrixXd c = x.rowwise() - x.colwise().mean();
  MatrixXd cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  if (x.rows() <= x.cols()) cov.diagonal().array() += 1e-6;
  return cov;
}

inline MatrixXd psd_sqrt(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (s + s.transpose()));
  if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-9 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) throw Error("covariance is not positive semi-definite");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Frechet distance between Gaussian fits of two sample sets (rows are samples).
inline double fid(const MatrixXd& a, const MatrixXd& b) {
  if (a.cols() != b.cols() || a.cols() == 0) throw Error("fid dimension mismatch");
  const MatrixXd s1 = detail::covariance(a), s2 = detail::covariance(b);
  const double mean_term = (a.colwise().mean() - b.colwise().mean()).squaredNorm();
  // Tr((S1 S2)^1/2) = Tr((S1^1/2 S2 S1^1/2)^1/2), symmetric throughout
  const MatrixXd r1 = detail::psd_sqrt(s1);
  const MatrixXd cross = detail::psd_sqrt(r1 * s2 * r1);
  return std::max(0.0, mean_term + s1.trace() + s2.trace() - 2.0 * cross.trace());
}

inline MatrixXd feature_matrix(const std::vector<MatrixXd>& sequences) {
  if (sequences.empty()) throw Error("no sequences");
  MatrixXd f(static_cast<Eigen::Index>(sequences.size()), 2 * sequences.front().cols());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].cols() != sequences.front().cols()) throw Error("frame widths differ");
    f.row(static_cast<Eigen::Index>(i)) = motion_features(sequences[i]);
  }
  return f;
}

/// FID on canonical-frame statistics, standardized by the real set.
inline double motion_fid(const std::vector<MatrixXd>& real, const std::vector<MatrixXd>& gen) {
  const auto [r, g] = standardize_by(feature_matrix(real), feature_matrix(gen));
  return fid(r, g);
}

/// Mean distance over seeded disjoint index pairs.
inline double diversity(const MatrixXd& features, int pairs = 20, std::uint64_t seed = 0) {
  if (features.rows() < 2) throw Error("diversity needs at least 2 samples");
  if (pairs < 1) throw Error("pairs must be >= 1");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(features.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(pairs), idx.size() / 2);
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += (features.row(idx[2 * k]) - features.row(idx[2 * k + 1])).norm();
  return s / static_cast<double>(n);
}

// ---------------------------------------------------------------- reports

struct PairMetrics {
  double mpjpe_mm = 0.0;
  double mpvpe_mm = 0.0;
  double fol_mm = 0.0;
  double cf_percent = 0.0;
  double pd_mm = 0.0;
};

inline PairMetrics evaluate_pair(const InteractionSequence& pred, const InteractionSequence& gt, double tau = 0.01) {
  if (pred.length() != gt.length()) throw Error("length mismatch: " + std::to_string(pred.length()) + " vs " +
                                                std::to_string(gt.length()));
  if (pred.geometry.size() != gt.geometry.size()) throw Error("geometry mismatch");
  const MatrixXd jp = sequence_joints(pred.hands), jg = sequence_joints(gt.hands);
  PairMetrics m;
  m.mpjpe_mm = mpjpe(jp, jg);
  m.mpvpe_mm = mpvpe(pred.object, gt.object, gt.geometry);
  m.fol_mm = fol(pred.object, gt.object);
  m.cf_percent = contact_frame_ratio(jp, pred.object, pred.geometry, tau);
  m.pd_mm = penetration_depth(jp, pred.object, pred.geometry);
  return m;
}

struct MetricsReport {
  double mpjpe_mm = 0.0;
  double mpvpe_mm = 0.0;
  double fol_mm = 0.0;
  double cf_percent = 0.0;
  double pd_mm = 0.0;
  double fid = 0.0;
  double diversity = 0.0;
};

inline const std::vector<std::string>& pair_metric_names() {
  static const std::vector<std::string> names{"mpjpe_mm", "mpvpe_mm", "fol_mm", "cf_percent", "pd_mm"};
  return names;
}

inline std::vector<double> pair_values(const PairMetrics& m) {
  return {m.mpjpe_mm, m.mpvpe_mm, m.fol_mm, m.cf_percent, m.pd_mm};
}

inline json pair_json(const PairMetrics& m) {
  json j;
  const auto v = pair_values(m);
  for (std::size_t k = 0; k < v.size(); ++k) j[pair_metric_names()[k]] = v[k];
  return j;
}

struct Aggregate {
  std::vector<double> mean, std;
};

/// Per-metric mean and population std over pairs.
inline Aggregate aggregate(const std::vector<PairMetrics>& rows) {
  if (rows.empty()) throw Error("nothing to aggregate");
  const std::size_t k = pair_metric_names().size();
  Aggregate a{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0)};
  for (const auto& r : rows) {
    const auto v = pair_values(r);
    for (std::size_t c = 0; c < k; ++c) a.mean[c] += v[c];
  }
  for (auto& m : a.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const auto v = pair_values(r);
    for (std::size_t c = 0; c < k; ++c) a.std[c] += (v[c] - a.mean[c]) * (v[c] - a.mean[c]);
  }
  for (auto& s : a.std) s = std::sqrt(s / static_cast<double>(rows.size()));
  return a;
}

inline MetricsReport report_from(const Aggregate& a, double fid_value, double diversity_value) {
  return {a.mean[0], a.mean[1], a.mean[2], a.mean[3], a.mean[4], fid_value, diversity_value};
}

inline json report_json(const MetricsReport& r) {
  return {{"mpjpe_mm", r.mpjpe_mm}, {"mpvpe_mm", r.mpvpe_mm}, {"fol_mm", r.fol_mm}, {"cf_percent", r.cf_percent},
          {"pd_mm", r.pd_mm},       {"fid", r.fid},           {"diversity", r.diversity}};
}

inline std::string report_table(const MetricsReport& r, const Aggregate* a = nullptr) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %12s %12s\n", "metric", "mean", "std");
  out += line;
  const double vals[] = {r.mpjpe_mm, r.mpvpe_mm, r.fol_mm, r.cf_percent, r.pd_mm};
  for (std::size_t k = 0; k < 5; ++k) {
    if (a)
      std::snprintf(line, sizeof(line), "%-12s %12.4f %12.4f\n", pair_metric_names()[k].c_str(), vals[k], a->std[k]);
    else
      std::snprintf(line, sizeof(line), "%-12s %12.4f %12s\n", pair_metric_names()[k].c_str(), vals[k], "-");
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-12s %12.6f %12s\n", "fid", r.fid, "-");
  out += line;
  std::snprintf(line, sizeof(line), "%-12s %12.4f %12s\n", "diversity", r.diversity, "-");
  out += line;
  return out;
}

}  // namespace ghoi
