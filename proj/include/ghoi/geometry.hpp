#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ghoi {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Error raised by every module for contract violations and numeric failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// SO(3) exponential map from an axis-angle vector.
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

/// SO(3) logarithm; returns the axis-angle vector with angle in [0, pi].
inline Vec3 so3_log(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v;
  return 2.0 * std::atan2(n, q.w()) / n * v;
}

/// Left Jacobian of SO(3): d(exp(w) v)/dw = -[exp(w) v]_x * left_jacobian(w).
inline Mat3 so3_left_jacobian(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-8) return Mat3::Identity() + 0.5 * k;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

/// Proper rotation stored as an orthonormal 3x3 matrix.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  explicit Rotation(const Mat3& m) : m_(m) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    return Rotation(q.normalized().toRotationMatrix());
  }

  static Rotation from_axis_angle(const Vec3& w) { return Rotation(so3_exp(w)); }

  /// Gram-Schmidt on the two stored columns.
  static Rotation from_6d(const std::array<double, 6>& a) {
    const Vec3 a1(a[0], a[1], a[2]);
    const Vec3 a2(a[3], a[4], a[5]);
    const double n1 = a1.norm();
    if (!(n1 > 0.0)) throw Error("degenerate 6d rotation");
    const Vec3 b1 = a1 / n1;
    const Vec3 u2 = a2 - b1.dot(a2) * b1;
    const double n2 = u2.norm();
    if (!(n2 > 0.0)) throw Error("degenerate 6d rotation");
    const Vec3 b2 = u2 / n2;
    Mat3 m;
    m.col(0) = b1;
    m.col(1) = b2;
    m.col(2) = b1.cross(b2);
    return Rotation(m);
  }

  Eigen::Quaterniond to_quaternion() const { return Eigen::Quaterniond(m_).normalized(); }
  Vec3 to_axis_angle() const { return so3_log(m_); }

  std::array<double, 6> to_6d() const {
    return {m_(0, 0), m_(1, 0), m_(2, 0), m_(0, 1), m_(1, 1), m_(2, 1)};
  }

  const Mat3& matrix() const { return m_; }
  Rotation inverse() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  bool is_valid(double tol = 1e-6) const {
    return (m_.transpose() * m_ - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(m_.determinant() - 1.0) <= tol;
  }

 private:
  Mat3 m_;
};

/// Jacobian of from_6d: d(vec(R))/d(a) where vec stacks the three columns.
inline Eigen::Matrix<double, 9, 6> rot6d_jacobian(const std::array<double, 6>& a) {
  const Vec3 a1(a[0], a[1], a[2]);
  const Vec3 a2(a[3], a[4], a[5]);
  const double n1 = a1.norm();
  const Vec3 b1 = a1 / n1;
  const Mat3 db1_da1 = (Mat3::Identity() - b1 * b1.transpose()) / n1;
  const double s = b1.dot(a2);
  const Vec3 u2 = a2 - s * b1;
  const double n2 = u2.norm();
  const Vec3 b2 = u2 / n2;
  const Mat3 du2_da2 = Mat3::Identity() - b1 * b1.transpose();
  const Mat3 du2_db1 = -(s * Mat3::Identity() + b1 * a2.transpose());
  const Mat3 du2_da1 = du2_db1 * db1_da1;
  const Mat3 db2_du2 = (Mat3::Identity() - b2 * b2.transpose()) / n2;
  const Mat3 db2_da1 = db2_du2 * du2_da1;
  const Mat3 db2_da2 = db2_du2 * du2_da2;
  // b3 = b1 x b2
  const Mat3 db3_da1 = -skew(b2) * db1_da1 + skew(b1) * db2_da1;
  const Mat3 db3_da2 = skew(b1) * db2_da2;

  Eigen::Matrix<double, 9, 6> j = Eigen::Matrix<double, 9, 6>::Zero();
  j.block<3, 3>(0, 0) = db1_da1;
  j.block<3, 3>(3, 0) = db2_da1;
  j.block<3, 3>(3, 3) = db2_da2;
  j.block<3, 3>(6, 0) = db3_da1;
  j.block<3, 3>(6, 3) = db3_da2;
  return j;
}

class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(Rotation r, Vec3 t) : rotation(std::move(r)), translation(std::move(t)) {}

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  RigidTransform inverse() const {
    const Rotation ri = rotation.inverse();
    return {ri, -(ri * translation)};
  }

  Rotation rotation;
  Vec3 translation = Vec3::Zero();
};

/// Sampled object surface with per-point outward unit normals, in the object frame.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    if (points.size() != normals.size()) throw Error("point/normal count mismatch");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!points[i].allFinite()) throw Error("non-finite point");
      if (std::abs(normals[i].norm() - 1.0) > 1e-6) throw Error("normal is not unit length");
    }
  }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points) c += p;
    return points.empty() ? c : Vec3(c / static_cast<double>(points.size()));
  }
};

/// Points and normals of a cloud posed by a rigid transform.
inline PointCloud transformed(const PointCloud& cloud, const RigidTransform& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  out.normals.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.points.push_back(pose.apply(cloud.points[i]));
    if (i < cloud.normals.size()) out.normals.push_back(pose.rotation * cloud.normals[i]);
  }
  return out;
}

struct NearestResult {
  std::size_t index = 0;
  double distance = 0.0;
  Vec3 offset = Vec3::Zero();  // points[index] - query
};

namespace detail {

inline NearestResult brute_force_nearest(const Vec3& query, std::span<const Vec3> points) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d2 = (points[i] - query).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return {best, std::sqrt(best_d2), points[best] - query};
}

}  // namespace detail

/// Uniform grid over a point set for exact nearest-point queries on large clouds.
class GridIndex {
 public:
  explicit GridIndex(std::span<const Vec3> points, std::size_t target_per_cell = 8)
      : points_(points.begin(), points.end()) {
    if (points_.empty()) throw Error("empty geometry");
    lo_ = points_.front();
    Vec3 hi = lo_;
    for (const auto& p : points_) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 ext = (hi - lo_).cwiseMax(1e-9);
    const double cells = std::max(1.0, static_cast<double>(points_.size()) / target_per_cell);
    cell_ = std::cbrt(ext.prod() / cells);
    if (!(cell_ > 0.0)) cell_ = ext.maxCoeff() / std::cbrt(cells);
    for (int a = 0; a < 3; ++a)
      dims_[a] = std::max(1, static_cast<int>(std::ceil(ext[a] / cell_)) + 1);
    buckets_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], {});
    for (std::size_t i = 0; i < points_.size(); ++i) buckets_[flat(cell_of(points_[i]))].push_back(i);
  }

  NearestResult nearest(const Vec3& query) const {
    const auto c = cell_of(query);
    std::size_t best = points_.size();
    double best_d2 = std::numeric_limits<double>::infinity();
    int max_ring = 0;
    for (int a = 0; a < 3; ++a) max_ring = std::max({max_ring, std::abs(c[a]), std::abs(c[a] - dims_[a] + 1)});
    for (int ring = 0; ring <= max_ring; ++ring) {
      // lower bound on the distance of any point in this ring
      if (ring > 0) {
        const double bound = (ring - 1) * cell_;
        if (best < points_.size() && bound * bound > best_d2) break;
      }
      for (int i = c[0] - ring; i <= c[0] + ring; ++i)
        for (int j = c[1] - ring; j <= c[1] + ring; ++j)
          for (int k = c[2] - ring; k <= c[2] + ring; ++k) {
            if (std::max({std::abs(i - c[0]), std::abs(j - c[1]), std::abs(k - c[2])}) != ring) continue;
            if (i < 0 || j < 0 || k < 0 || i >= dims_[0] || j >= dims_[1] || k >= dims_[2]) continue;
            for (std::size_t idx : buckets_[flat({i, j, k})]) {
              const double d2 = (points_[idx] - query).squaredNorm();
              if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                best_d2 = d2;
                best = idx;
              }
            }
          }
    }
    return {best, std::sqrt(best_d2), points_[best] - query};
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a)
      c[a] = static_cast<int>(std::floor((p[a] - lo_[a]) / cell_));
    return c;
  }
  std::size_t flat(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
  }

  std::vector<Vec3> points_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::vector<std::size_t>> buckets_;
};

inline constexpr std::size_t kGridThreshold = 2048;

/// Exact nearest point; ties resolve to the lowest index.
inline NearestResult nearest_point(const Vec3& query, std::span<const Vec3> points) {
  if (points.empty()) throw Error("empty geometry");
  if (points.size() > kGridThreshold) return GridIndex(points).nearest(query);
  return detail::brute_force_nearest(query, points);
}

inline double alignment_residual(std::span<const Vec3> src, std::span<const Vec3> dst,
                                 const RigidTransform& t) {
  double r = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) r += (t.apply(src[i]) - dst[i]).squaredNorm();
  return r;
}

/// Least-squares proper rigid transform mapping src onto dst.
inline RigidTransform kabsch_align(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.size() < 3) throw Error("degenerate alignment");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs;
    h += a * (dst[i] - cd).transpose();
    scatter += a * a.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (!(ev[2] > 0.0) || ev[1] <= 1e-12 * ev[2]) throw Error("degenerate alignment");

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = v * d * u.transpose();
  return {Rotation(r), cd - r * cs};
}

/// Per-point unit normals from a PCA plane fit over the k nearest neighbours,
/// oriented away from `center` (the cloud centroid when omitted).
inline std::vector<Vec3> estimate_normals(std::span<const Vec3> points, std::size_t k,
                                          std::optional<Vec3> center = std::nullopt) {
  if (k < 3 || points.size() <= k) throw Error("estimate_normals requires |points| > k >= 3");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  const Vec3 ref = center.value_or(c);

  std::vector<Vec3> normals(points.size());
  std::vector<std::pair<double, std::size_t>> dist(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j)
      dist[j] = {(points[j] - points[i]).squaredNorm(), j};
    // self plus k neighbours
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k + 1), dist.end());
    Vec3 mean = Vec3::Zero();
    for (std::size_t n = 0; n <= k; ++n) mean += points[dist[n].second];
    mean /= static_cast<double>(k + 1);
    Mat3 cov = Mat3::Zero();
    for (std::size_t n = 0; n <= k; ++n) {
      const Vec3 d = points[dist[n].second] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();
    const Vec3 radial = points[i] - ref;
    Vec3 n;
    if (ev[1] <= 1e-12 * std::max(ev[2], 1e-300)) {
      n = radial.norm() > 0.0 ? Vec3(radial.normalized()) : Vec3::UnitZ();
    } else {
      n = es.eigenvectors().col(0).normalized();
      if (n.dot(radial) < 0.0) n = -n;
    }
    normals[i] = n;
  }
  return normals;
}

}  // namespace ghoi
