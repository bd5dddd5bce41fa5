#pragma once

#include "ghoi/hoi_repr.hpp"
#include "ghoi/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace ghoi {

struct SelectionParams {
  double alpha = 100.0;  // 1/m
  double delta = 0.03;   // m
  int surface_samples = 256;
  int top_k = 4;

  void validate() const {
    if (!(alpha > 0.0) || !(delta > 0.0)) throw Error("alpha and delta must be positive");
    if (surface_samples < kNumJoints) throw Error("surface_samples must be >= 21");
    if (top_k < 1) throw Error("top_k must be >= 1");
  }
};

inline json selection_json(const SelectionParams& p) {
  return {{"alpha", p.alpha}, {"delta", p.delta}, {"surface_samples", p.surface_samples}, {"top_k", p.top_k}};
}

inline SelectionParams selection_from(const json& j) {
  SelectionParams p;
  p.alpha = j.value("alpha", p.alpha);
  p.delta = j.value("delta", p.delta);
  p.surface_samples = j.value("surface_samples", p.surface_samples);
  p.top_k = j.value("top_k", p.top_k);
  p.validate();
  return p;
}

using SurfaceMap = std::vector<double>;

/// exp(-alpha * distance from each object point to the nearest source point).
inline SurfaceMap surface_map(std::span<const Vec3> source, std::span<const Vec3> object_world, double alpha) {
  if (source.empty() || object_world.empty()) throw Error("surface map needs nonempty point sets");
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  SurfaceMap m(object_world.size());
  for (std::size_t k = 0; k < object_world.size(); ++k)
    m[k] = std::exp(-alpha * nearest_point(object_world[k], source).distance);
  return m;
}

inline SurfaceMap contact_map(std::span<const Vec3> hand_surface, std::span<const Vec3> object_world,
                              double alpha = 100.0) {
  return surface_map(hand_surface, object_world, alpha);
}

inline SurfaceMap gaze_map(std::span<const Vec3> gaze_points, std::span<const Vec3> object_world,
                           double alpha = 100.0) {
  return surface_map(gaze_points, object_world, alpha);
}

/// Both hands' surface samples for frame i (seeded per frame and hand).
inline std::vector<Vec3> frame_hand_surface(const HandMotion& hands, std::size_t i, int m) {
  auto out = sample_hand_surface(hands.left_shape, hands.left[i], m, 2 * i);
  const auto r = sample_hand_surface(hands.right_shape, hands.right[i], m, 2 * i + 1);
  out.insert(out.end(), r.begin(), r.end());
  return out;
}

/// Frame-mean of the mean contact-map value over object points near the gaze;
/// frames whose gaze is farther than delta from every point contribute 0.
/// surface(i) returns the hand surface samples of frame i.
template <class SurfaceFn>
double contact_consistency(const std::vector<std::vector<Vec3>>& object_world, const GazeSequence& gaze,
                           SurfaceFn&& surface, double alpha, double delta) {
  const std::size_t l = gaze.size();
  if (l == 0 || object_world.size() != l) throw Error("contact consistency needs equal nonempty lengths");
  double total = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    const auto& world = object_world[i];
    std::vector<std::size_t> near;
    for (std::size_t k = 0; k < world.size(); ++k)
      if ((world[k] - gaze[i]).norm() < delta) near.push_back(k);
    if (near.empty()) continue;
    const std::vector<Vec3> hs = surface(i);
    double s = 0.0;
    for (auto k : near) s += std::exp(-alpha * nearest_point(world[k], hs).distance);
    total += s / static_cast<double>(near.size());
  }
  return total / static_cast<double>(l);
}

inline double score_contact_consistency(const HandMotion& hands, const ObjectMotion& object,
                                        const GazeSequence& gaze, const PointCloud& geom,
                                        const SelectionParams& p = {}) {
  const std::size_t l = gaze.size();
  if (l == 0 || hands.left.size() != l || hands.right.size() != l || object.size() != l)
    throw Error("contact consistency needs equal nonempty lengths");
  std::vector<std::vector<Vec3>> world(l);
  for (std::size_t i = 0; i < l; ++i) world[i] = posed_points(geom, object.pose(i));
  return contact_consistency(world, gaze, [&](std::size_t i) { return frame_hand_surface(hands, i, p.surface_samples); },
                             p.alpha, p.delta);
}

/// Minimal cumulative Euclidean alignment cost, steps (i-1,j), (i,j-1), (i-1,j-1).
inline double dtw(std::span<const Vec3> x, std::span<const Vec3> y) {
  if (x.empty() || y.empty()) throw Error("dtw needs nonempty sequences");
  const std::size_t n = x.size(), m = y.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double c = (x[i - 1] - y[j - 1]).norm();
      cur[j] = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
    prev[0] = inf;
  }
  return prev[m];
}

inline double score_trajectory(std::span<const Vec3> gaze, std::span<const Vec3> left_wrist,
                               std::span<const Vec3> right_wrist, std::span<const Vec3> object_trans) {
  return dtw(gaze, left_wrist) + dtw(gaze, right_wrist) + dtw(gaze, object_trans);
}

/// A candidate interaction: generated hands and object motion.
struct Candidate {
  HandMotion hands;
  ObjectMotion object;
};

struct ConsistencyScore {
  double s_c = 0.0;
  double s_t = 0.0;
  double combined = 0.0;
  int rank = 0;
};

struct Ranking {
  std::vector<ConsistencyScore> scores;  // per candidate, input order
  std::vector<std::size_t> order;        // all candidates, best first
  std::vector<std::size_t> top;          // first min(k, n) of order
};

inline ConsistencyScore score_candidate(const Candidate& c, const GazeSequence& gaze, const PointCloud& geom,
                                        const SelectionParams& p) {
  const std::size_t l = gaze.size();
  if (c.hands.left.size() != l || c.hands.right.size() != l || c.object.size() != l)
    throw Error("candidate length differs from gaze length");
  std::vector<Vec3> lw(l), rw(l);
  for (std::size_t i = 0; i < l; ++i) {
    const auto j = frame_joints(c.hands, i);
    lw[i] = j[layout::kLeftWrist];
    rw[i] = j[layout::kRightWrist];
  }
  ConsistencyScore s;
  s.s_c = score_contact_consistency(c.hands, c.object, gaze, geom, p);
  s.s_t = score_trajectory(gaze, lw, rw, c.object.trans);
  return s;
}

namespace detail {

inline std::vector<double> min_max(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.5);
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

}  // namespace detail

/// combined = norm(s_c) + 1 - norm(s_t); descending, ties by index.
inline Ranking rank_scores(const std::vector<double>& s_c, const std::vector<double>& s_t, int k) {
  if (s_c.empty() || s_c.size() != s_t.size()) throw Error("rank needs matching nonempty score lists");
  if (k < 1) throw Error("k must be >= 1");
  const auto nc = detail::min_max(s_c), nt = detail::min_max(s_t);
  Ranking r;
  r.scores.resize(s_c.size());
  for (std::size_t i = 0; i < s_c.size(); ++i) r.scores[i] = {s_c[i], s_t[i], nc[i] + (1.0 - nt[i]), 0};
  r.order.resize(s_c.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return r.scores[a].combined > r.scores[b].combined; });
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) r.scores[r.order[pos]].rank = static_cast<int>(pos) + 1;
  r.top.assign(r.order.begin(), r.order.begin() + static_cast<long>(std::min<std::size_t>(k, r.order.size())));
  return r;
}

inline Ranking rank_candidates(const std::vector<Candidate>& candidates, const GazeSequence& gaze,
                               const PointCloud& geom, const SelectionParams& p, int k) {
  if (candidates.empty()) throw Error("no candidates to rank");
  p.validate();
  std::vector<double> sc, st;
  for (const auto& c : candidates) {
    const auto s = score_candidate(c, gaze, geom, p);
    sc.push_back(s.s_c);
    st.push_back(s.s_t);
  }
  return rank_scores(sc, st, k);
}

inline json ranking_json(const Ranking& r, const std::vector<std::string>& names = {}) {
  json cands = json::array();
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    json c = {{"index", i}, {"s_c", r.scores[i].s_c}, {"s_t", r.scores[i].s_t},
              {"combined", r.scores[i].combined}, {"rank", r.scores[i].rank}};
    if (i < names.size()) c["name"] = names[i];
    cands.push_back(c);
  }
  return {{"candidates", cands}, {"top", r.top}};
}

}  // namespace ghoi
