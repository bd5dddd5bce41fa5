#include "ghoi/io.hpp"
#include "ghoi/synth_data.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace ghoi;

TEST(Primitive, SamplesLieOnSurfaceWithOutwardNormals) {
  std::mt19937_64 rng(1);
  for (auto kind : {PrimitiveKind::Box, PrimitiveKind::Sphere, PrimitiveKind::Cylinder}) {
    Primitive p{kind, Vec3(0.03, 0.04, 0.05)};
    if (kind == PrimitiveKind::Sphere) p.size = Vec3::Constant(0.04);
    if (kind == PrimitiveKind::Cylinder) p.size.y() = p.size.x();
    const auto cloud = p.sample_surface(400, rng);
    ASSERT_EQ(cloud.size(), 400u);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      EXPECT_NEAR(p.signed_distance(cloud.points[i]), 0.0, 1e-12);
      EXPECT_NEAR(cloud.normals[i].norm(), 1.0, 1e-12);
      EXPECT_GT(p.signed_distance(cloud.points[i] + 1e-3 * cloud.normals[i]), 0.0);
      EXPECT_LT(p.signed_distance(cloud.points[i] - 1e-3 * cloud.normals[i]), 0.0);
    }
  }
}

TEST(Primitive, BoxSignedDistanceExamples) {
  Primitive b{PrimitiveKind::Box, Vec3(1, 2, 3)};
  EXPECT_DOUBLE_EQ(b.signed_distance(Vec3(0, 0, 0)), -1.0);
  EXPECT_DOUBLE_EQ(b.signed_distance(Vec3(2, 0, 0)), 1.0);
  EXPECT_DOUBLE_EQ(b.signed_distance(Vec3(4, 6, 3)), 5.0);
  Primitive c{PrimitiveKind::Cylinder, Vec3(1, 1, 1)};
  EXPECT_DOUBLE_EQ(c.signed_distance(Vec3(0, 0, 3)), 2.0);
  EXPECT_DOUBLE_EQ(c.signed_distance(Vec3(0, 0.5, 0)), -0.5);
}

TEST(Scene, DeterministicPerSeed) {
  SceneConfig cfg;
  const auto a = generate_scene(cfg, 42), b = generate_scene(cfg, 42), c = generate_scene(cfg, 43);
  EXPECT_EQ(sequence_to_string(a.sequence), sequence_to_string(b.sequence));
  EXPECT_NE(sequence_to_string(a.sequence), sequence_to_string(c.sequence));
}

TEST(Scene, RespectsConfigAndLimits) {
  SceneConfig cfg;
  const AngleLimits limits;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto scene = generate_scene(cfg, seed);
    const auto& s = scene.sequence;
    EXPECT_GE(s.length(), 30u);
    EXPECT_LE(s.length(), 90u);
    EXPECT_EQ(s.geometry.size(), 500u);
    for (std::size_t i = 0; i < s.length(); ++i) {
      EXPECT_TRUE(limits.contains(s.hands.left[i]));
      EXPECT_TRUE(limits.contains(s.hands.right[i]));
    }
  }
}

TEST(Scene, HandHoldsObjectDuringMove) {
  SceneConfig cfg;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto scene = generate_scene(cfg, seed);
    const auto c = canonicalize(scene.sequence);
    const auto& ph = scene.metadata.phase_start;
    int contact = 0, total = 0;
    double deepest = 0.0;
    for (int i = ph[2]; i < ph[3]; ++i) {
      const bool any = c.contacts().row(i).rightCols(21).maxCoeff() > 0.5;
      contact += any ? 1 : 0;
      ++total;
      const auto obj = scene.sequence.object.pose(static_cast<std::size_t>(i)).inverse();
      for (int k = 0; k < 42; ++k)
        deepest = std::min(deepest, scene.metadata.primitive.signed_distance(obj.apply(c.joint(i, k))));
    }
    ASSERT_GT(total, 0);
    EXPECT_GE(static_cast<double>(contact) / total, 0.95) << "seed " << seed;
    EXPECT_GT(deepest, -1e-6) << "seed " << seed;
    // left hand never touches the object
    EXPECT_EQ(c.contacts().leftCols(21).sum(), 0.0) << "seed " << seed;
  }
}

TEST(Scene, GazeLeadsTheContactRegion) {
  SceneConfig cfg;
  cfg.saccade_fraction = 0.0;
  const auto scene = generate_scene(cfg, 7);
  const auto& s = scene.sequence;
  const Vec3 local = s.geometry.points[scene.metadata.contact_point];
  const int lead = static_cast<int>(std::lround(cfg.gaze_lead_s * cfg.fps));
  for (std::size_t i = 0; i < s.length(); ++i) {
    const std::size_t ahead = std::min(i + static_cast<std::size_t>(lead), s.length() - 1);
    EXPECT_LT((s.gaze[i] - s.object.pose(ahead).apply(local)).norm(), 6 * cfg.gaze_jitter);
  }
}

TEST(Dataset, SplitAndManifest) {
  const auto plan = plan_dataset(10, 5);
  int train = 0;
  std::set<std::uint64_t> seeds;
  for (const auto& e : plan) {
    train += e.train ? 1 : 0;
    seeds.insert(e.seed);
  }
  EXPECT_EQ(train, 8);
  EXPECT_EQ(seeds.size(), 10u);
  const auto again = plan_dataset(10, 5);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    EXPECT_EQ(plan[i].seed, again[i].seed);
    EXPECT_EQ(plan[i].train, again[i].train);
  }
  EXPECT_THROW(plan_dataset(1, 0), Error);

  SceneConfig cfg;
  const auto d = generate_dataset(cfg, 5, 9);
  EXPECT_EQ(d.train.size(), 4u);
  EXPECT_EQ(d.val.size(), 1u);
  const auto m = manifest_json(d, cfg);
  EXPECT_EQ(m["items"].size(), 5u);
  EXPECT_EQ(m["train"], 4);
}

TEST(SceneConfigJson, RoundTripAndValidation) {
  SceneConfig cfg;
  cfg.primitives = {PrimitiveKind::Sphere};
  cfg.length_max = 60;
  const auto back = scene_config_from(scene_config_json(cfg));
  EXPECT_EQ(scene_config_json(back).dump(), scene_config_json(cfg).dump());
  json bad = scene_config_json(cfg);
  bad["phases"] = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(scene_config_from(bad), Error);
  bad = scene_config_json(cfg);
  bad["primitives"] = {"torus"};
  EXPECT_THROW(scene_config_from(bad), Error);
}
