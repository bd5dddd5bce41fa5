#include "ghoi/selection.hpp"
#include "ghoi/synth_data.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>

using namespace ghoi;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<Vec3> p(n);
  for (auto& v : p) v = Vec3(g(rng), g(rng), g(rng));
  return p;
}

// Enumerate every monotone warping path explicitly and keep the cheapest.
double dtw_brute(const std::vector<Vec3>& x, const std::vector<Vec3>& y) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::size_t, std::size_t>> path{{0, 0}};
  std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t i, std::size_t j) {
    if (i == x.size() - 1 && j == y.size() - 1) {
      double c = 0.0;
      for (auto [a, b] : path) c += (x[a] - y[b]).norm();
      best = std::min(best, c);
      return;
    }
    const std::pair<std::size_t, std::size_t> steps[3] = {{i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
    for (auto [a, b] : steps) {
      if (a >= x.size() || b >= y.size()) continue;
      path.push_back({a, b});
      walk(a, b);
      path.pop_back();
    }
  };
  walk(0, 0);
  return best;
}

Candidate as_candidate(const InteractionSequence& s) { return {s.hands, s.object}; }

}  // namespace

TEST(SurfaceMaps, Examples) {
  const std::vector<Vec3> obj{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const std::vector<Vec3> src{Vec3(0, 0, 0), Vec3(1, std::log(2.0) / 100.0, 0)};
  const auto m = contact_map(src, obj, 100.0);
  EXPECT_EQ(m[0], 1.0);
  EXPECT_NEAR(m[1], 0.5, 1e-15);
  const auto g = gaze_map(src, obj, 100.0);
  EXPECT_EQ(g, m);

  std::mt19937_64 rng(1);
  const auto a = random_points(300, rng, 0.05), b = random_points(200, rng, 0.05);
  const auto cm = contact_map(a, b, 100.0);
  for (std::size_t k = 0; k < b.size(); ++k) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& p : a) d = std::min(d, (p - b[k]).norm());
    EXPECT_DOUBLE_EQ(cm[k], std::exp(-100.0 * d));
    EXPECT_GT(cm[k], 0.0);
    EXPECT_LE(cm[k], 1.0);
  }
}

TEST(ContactConsistency, TrivialAndHandComputed) {
  const std::vector<std::vector<Vec3>> world{{Vec3(0, 0, 0), Vec3(0.01, 0, 0), Vec3(1, 0, 0)},
                                            {Vec3(0, 0, 0), Vec3(0.01, 0, 0), Vec3(1, 0, 0)}};
  auto touching = [](std::size_t) { return std::vector<Vec3>{Vec3(0, 0, 0), Vec3(0.01, 0, 0)}; };
  const GazeSequence on{Vec3(0.005, 0, 0), Vec3(0.005, 0, 0)};
  EXPECT_EQ(contact_consistency(world, on, touching, 100.0, 0.03), 1.0);

  const GazeSequence off{Vec3(0.5, 0, 0), Vec3(0.5, 0, 0)};
  EXPECT_EQ(contact_consistency(world, off, touching, 100.0, 0.03), 0.0);

  // frame 0: near set {0, 1}, hand at (0.02,0,0) -> e^-2, e^-1
  // frame 1: gaze away -> contributes 0
  auto hand = [](std::size_t) { return std::vector<Vec3>{Vec3(0.02, 0, 0)}; };
  const GazeSequence mixed{Vec3(0.005, 0, 0), Vec3(0.5, 0, 0)};
  const double expect = 0.5 * (std::exp(-2.0) + std::exp(-1.0)) / 2.0;
  EXPECT_NEAR(contact_consistency(world, mixed, hand, 100.0, 0.03), expect, 1e-15);
}

TEST(ContactConsistency, GeneratedScenesLieInUnitInterval) {
  SceneConfig cfg;
  const auto scene = generate_scene(cfg, 5);
  const auto& s = scene.sequence;
  const double sc = score_contact_consistency(s.hands, s.object, s.gaze, s.geometry);
  EXPECT_GT(sc, 0.0);
  EXPECT_LE(sc, 1.0);
}

TEST(Dtw, Examples) {
  std::mt19937_64 rng(2);
  const auto x = random_points(7, rng);
  EXPECT_EQ(dtw(x, x), 0.0);
  EXPECT_EQ(dtw(std::vector<Vec3>{Vec3::Zero()}, std::vector<Vec3>{Vec3(1, 0, 0)}), 1.0);
  EXPECT_THROW(dtw(std::vector<Vec3>{}, x), Error);
}

TEST(Dtw, MatchesPathEnumeration) {
  std::mt19937_64 rng(3);
  for (int n = 1; n <= 5; ++n)
    for (int m = 1; m <= 5; ++m)
      for (int rep = 0; rep < 8; ++rep) {
        const auto x = random_points(static_cast<std::size_t>(n), rng);
        const auto y = random_points(static_cast<std::size_t>(m), rng);
        EXPECT_EQ(dtw(x, y), dtw_brute(x, y)) << n << "x" << m;
        EXPECT_NEAR(dtw(x, y), dtw(y, x), 1e-12);
        EXPECT_GE(dtw(x, y), 0.0);
      }
}

TEST(Dtw, ZeroOnlyWithAZeroCostPath) {
  const std::vector<Vec3> x{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  const std::vector<Vec3> stretched{Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(2, 0, 0)};
  EXPECT_EQ(dtw(x, stretched), 0.0);
  const std::vector<Vec3> reversed{Vec3(2, 0, 0), Vec3(1, 0, 0), Vec3(0, 0, 0)};
  EXPECT_GT(dtw(x, reversed), 0.0);
}

TEST(Trajectory, ShiftAndAdditivity) {
  std::vector<Vec3> g;
  for (int i = 0; i < 12; ++i) g.emplace_back(0.01 * i, 0, 0);
  EXPECT_EQ(score_trajectory(g, g, g, g), 0.0);
  std::vector<Vec3> shifted = g;
  for (auto& p : shifted) p.z() += 0.01;
  EXPECT_NEAR(score_trajectory(g, g, g, shifted), 0.01 * 12, 1e-12);

  std::mt19937_64 rng(4);
  const auto a = random_points(9, rng), b = random_points(11, rng), c = random_points(8, rng), d = random_points(10, rng);
  EXPECT_EQ(score_trajectory(a, b, c, d), dtw(a, b) + dtw(a, c) + dtw(a, d));
}

TEST(Rank, DominanceTiesAndK) {
  auto r = rank_scores({0.2, 0.9, 0.5}, {3.0, 1.0, 2.0}, 2);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_EQ(r.top, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.scores[1].rank, 1);
  EXPECT_EQ(r.scores[1].combined, 2.0);
  EXPECT_EQ(r.scores[0].combined, 0.0);

  r = rank_scores({0.4, 0.4, 0.4}, {1.0, 1.0, 1.0}, 10);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(r.top.size(), 3u);
  for (const auto& s : r.scores) EXPECT_EQ(s.combined, 1.0);

  EXPECT_THROW(rank_scores({}, {}, 1), Error);
  EXPECT_THROW(rank_scores({1.0}, {1.0}, 0), Error);
}

TEST(Rank, InvariantToPositiveAffineRescaling) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> sc(12), st(12);
    for (auto& v : sc) v = u(rng);
    for (auto& v : st) v = 10.0 * u(rng);
    const auto base = rank_scores(sc, st, 4);
    const double a = 0.5 + 4.0 * u(rng), b = u(rng) - 0.5, c = 0.1 + 3.0 * u(rng), d = 5.0 * u(rng);
    std::vector<double> sc2(sc), st2(st);
    for (auto& v : sc2) v = a * v + b;
    for (auto& v : st2) v = c * v + d;
    EXPECT_EQ(rank_scores(sc2, st2, 4).order, base.order);
  }
}

TEST(Rank, GroundTruthBeatsRandomWalks) {
  SceneConfig cfg;
  const SelectionParams p;
  int first = 0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    const auto scene = generate_scene(cfg, 100 + static_cast<std::uint64_t>(t));
    const auto& s = scene.sequence;
    std::vector<Candidate> cands;
    const std::size_t gt_slot = static_cast<std::size_t>(t) % 10;
    for (std::size_t k = 0; k < 10; ++k)
      cands.push_back(k == gt_slot ? as_candidate(s) : as_candidate(random_walk_variant(s, 1000 * t + k)));
    const auto r = rank_candidates(cands, s.gaze, s.geometry, p, 1);
    if (r.top.front() == gt_slot) ++first;
  }
  EXPECT_GE(first, 9);
}

TEST(SynthGaze, InformativeAgainstRandomWalk) {
  SceneConfig cfg;
  int wins = 0;
  const int seeds = 40;
  for (int t = 0; t < seeds; ++t) {
    const auto s = generate_scene(cfg, 300 + static_cast<std::uint64_t>(t)).sequence;
    std::mt19937_64 rng(static_cast<std::uint64_t>(t));
    const auto walk = random_walk(s.object.trans.front(), s.length(), 0.01, rng);
    if (dtw(s.gaze, s.object.trans) < dtw(s.gaze, walk)) ++wins;
  }
  EXPECT_GE(wins, 38);
}

TEST(SelectionParamsJson, RoundTrip) {
  SelectionParams p;
  p.alpha = 50.0;
  p.top_k = 2;
  EXPECT_EQ(selection_json(selection_from(selection_json(p))), selection_json(p));
  auto bad = selection_json(p);
  bad["delta"] = 0.0;
  EXPECT_THROW(selection_from(bad), Error);
}
