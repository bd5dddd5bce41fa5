#pragma once

#include "ghoi/hoi_repr.hpp"
#include "ghoi/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ghoi {

enum class PrimitiveKind { Box, Sphere, Cylinder };

inline std::string to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Sphere: return "sphere";
    default: return "cylinder";
  }
}

inline PrimitiveKind primitive_from_string(const std::string& s) {
  if (s == "box") return PrimitiveKind::Box;
  if (s == "sphere") return PrimitiveKind::Sphere;
  if (s == "cylinder") return PrimitiveKind::Cylinder;
  throw Error("unknown primitive: " + s);
}

/// Analytic object centred at its frame origin; z is the up/axis direction.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Box;
  Vec3 size = Vec3(0.04, 0.04, 0.04);  // box half-extents | sphere (r,-,-) | cylinder (r,-,half height)

  double half_height() const {
    switch (kind) {
      case PrimitiveKind::Box: return size.z();
      case PrimitiveKind::Sphere: return size.x();
      default: return size.z();
    }
  }

  double signed_distance(const Vec3& p) const {
    switch (kind) {
      case PrimitiveKind::Sphere: return p.norm() - size.x();
      case PrimitiveKind::Box: {
        const Vec3 q = p.cwiseAbs() - size;
        return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
      }
      default: {
        const double dx = std::hypot(p.x(), p.y()) - size.x();
        const double dz = std::abs(p.z()) - size.z();
        return std::min(std::max(dx, dz), 0.0) + std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
      }
    }
  }

  /// Area-uniform surface samples with exact outward normals.
  PointCloud sample_surface(int n, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    PointCloud c;
    c.points.reserve(static_cast<std::size_t>(n));
    c.normals.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      Vec3 p, nrm;
      if (kind == PrimitiveKind::Sphere) {
        Vec3 d(g(rng), g(rng), g(rng));
        nrm = d.normalized();
        p = size.x() * nrm;
      } else if (kind == PrimitiveKind::Box) {
        const double ax = size.y() * size.z(), ay = size.x() * size.z(), az = size.x() * size.y();
        const double pick = u(rng) * (ax + ay + az);
        const int axis = pick < ax ? 0 : (pick < ax + ay ? 1 : 2);
        const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
        p = Vec3((2 * u(rng) - 1) * size.x(), (2 * u(rng) - 1) * size.y(), (2 * u(rng) - 1) * size.z());
        p[axis] = sign * size[axis];
        nrm = Vec3::Zero();
        nrm[axis] = sign;
      } else {
        const double r = size.x(), h = size.z();
        const double side = 2 * M_PI * r * 2 * h, cap = M_PI * r * r;
        const double pick = u(rng) * (side + 2 * cap);
        const double phi = 2 * M_PI * u(rng);
        if (pick < side) {
          p = Vec3(r * std::cos(phi), r * std::sin(phi), (2 * u(rng) - 1) * h);
          nrm = Vec3(std::cos(phi), std::sin(phi), 0.0);
        } else {
          const double rad = r * std::sqrt(u(rng));
          const double sign = pick < side + cap ? 1.0 : -1.0;
          p = Vec3(rad * std::cos(phi), rad * std::sin(phi), sign * h);
          nrm = Vec3(0, 0, sign);
        }
      }
      c.points.push_back(p);
      c.normals.push_back(nrm);
    }
    return c;
  }
};

struct SceneConfig {
  std::vector<PrimitiveKind> primitives{PrimitiveKind::Box, PrimitiveKind::Sphere, PrimitiveKind::Cylinder};
  double size_min = 0.025;  // half-size range, meters
  double size_max = 0.045;
  int num_points = 500;
  int length_min = 30;
  int length_max = 90;
  double fps = 30.0;
  double gaze_lead_s = 0.4;
  double gaze_jitter = 0.005;
  double saccade_fraction = 0.1;
  int saccade_frames = 3;
  double grasp_clearance = 0.002;  // closest joint to the surface at grasp
  double approach_standoff = 0.08;
  double move_distance_min = 0.15;
  double move_distance_max = 0.30;
  double lift_height = 0.10;
  // approach, grasp, move, place
  std::array<double, 4> phases{0.3, 0.1, 0.4, 0.2};

  void validate() const {
    if (primitives.empty()) throw Error("scene config needs at least one primitive");
    if (!(size_min > 0.0 && size_min <= size_max)) throw Error("invalid object size range");
    if (num_points < 1) throw Error("num_points must be positive");
    if (length_min < 8 || length_min > length_max) throw Error("invalid sequence length range");
    if (!(fps > 0.0)) throw Error("fps must be positive");
    double sum = 0.0;
    for (double p : phases) {
      if (p < 0.0) throw Error("negative phase fraction");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("phase fractions must sum to 1");
    if (!(move_distance_min > 0.0 && move_distance_min <= move_distance_max)) throw Error("invalid move range");
    if (saccade_fraction < 0.0 || saccade_fraction > 1.0 || saccade_frames < 1) throw Error("invalid saccade model");
  }
};

inline json scene_config_json(const SceneConfig& c) {
  json prims = json::array();
  for (auto k : c.primitives) prims.push_back(to_string(k));
  return {{"primitives", prims},           {"size_min", c.size_min},
          {"size_max", c.size_max},        {"num_points", c.num_points},
          {"length_min", c.length_min},    {"length_max", c.length_max},
          {"fps", c.fps},                  {"gaze_lead_s", c.gaze_lead_s},
          {"gaze_jitter", c.gaze_jitter},  {"saccade_fraction", c.saccade_fraction},
          {"saccade_frames", c.saccade_frames}, {"grasp_clearance", c.grasp_clearance},
          {"approach_standoff", c.approach_standoff}, {"move_distance_min", c.move_distance_min},
          {"move_distance_max", c.move_distance_max}, {"lift_height", c.lift_height},
          {"phases", c.phases}};
}

inline SceneConfig scene_config_from(const json& j) {
  SceneConfig c;
  if (j.contains("primitives")) {
    c.primitives.clear();
    for (const auto& p : j["primitives"]) c.primitives.push_back(primitive_from_string(p.get<std::string>()));
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("size_min", c.size_min);
  get("size_max", c.size_max);
  get("num_points", c.num_points);
  get("length_min", c.length_min);
  get("length_max", c.length_max);
  get("fps", c.fps);
  get("gaze_lead_s", c.gaze_lead_s);
  get("gaze_jitter", c.gaze_jitter);
  get("saccade_fraction", c.saccade_fraction);
  get("saccade_frames", c.saccade_frames);
  get("grasp_clearance", c.grasp_clearance);
  get("approach_standoff", c.approach_standoff);
  get("move_distance_min", c.move_distance_min);
  get("move_distance_max", c.move_distance_max);
  get("lift_height", c.lift_height);
  get("phases", c.phases);
  c.validate();
  return c;
}

struct SceneMetadata {
  Primitive primitive;
  std::uint64_t seed = 0;
  std::size_t contact_point = 0;  // index into geometry
  std::array<int, 5> phase_start{};  // approach, grasp, move, place, end (frame indices)
};

namespace detail {

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

inline Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + t * (b - a); }

inline Mat3 slerp(const Mat3& a, const Mat3& b, double t) {
  return so3_exp(t * so3_log(b * a.transpose())) * a;
}

struct HandTarget {
  RigidTransform pose;
  std::array<double, kThetaDim> theta{};
};

inline std::array<double, kThetaDim> flexion_pose(double mcp, double pip, double dip, double thumb_scale,
                                                  const std::array<double, 5>& abduction) {
  std::array<double, kThetaDim> th{};
  for (int f = 0; f < 5; ++f) {
    const double s = f == 0 ? thumb_scale : 1.0;
    th[static_cast<std::size_t>((f * 3 + 0) * 3 + 0)] = s * mcp;
    th[static_cast<std::size_t>((f * 3 + 0) * 3 + 1)] = abduction[static_cast<std::size_t>(f)];
    th[static_cast<std::size_t>((f * 3 + 1) * 3 + 0)] = s * pip;
    th[static_cast<std::size_t>((f * 3 + 2) * 3 + 0)] = s * dip;
  }
  return th;
}

inline HandPose make_pose(const RigidTransform& t, const std::array<double, kThetaDim>& theta) {
  HandPose p;
  p.global_rot = t.rotation.to_axis_angle();
  p.global_trans = t.translation;
  p.theta = theta;
  return p;
}

inline double min_joint_sdf(const Primitive& prim, const RigidTransform& object_pose, const HandShape& shape,
                            const HandPose& hand) {
  const auto joints = forward_kinematics(shape, hand);
  const RigidTransform inv = object_pose.inverse();
  double m = std::numeric_limits<double>::infinity();
  for (const auto& j : joints) m = std::min(m, prim.signed_distance(inv.apply(j)));
  return m;
}

}  // namespace detail

struct GeneratedScene {
  InteractionSequence sequence;
  SceneMetadata metadata;
};

/// Approach, grasp, carry and place one primitive with the right hand while
/// gaze leads the interaction region. Deterministic per seed.
inline GeneratedScene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  GeneratedScene out;
  auto& meta = out.metadata;
  meta.seed = seed;
  auto& prim = meta.primitive;
  prim.kind = cfg.primitives[static_cast<std::size_t>(u(rng) * static_cast<double>(cfg.primitives.size())) %
                             cfg.primitives.size()];
  prim.size = Vec3(uni(cfg.size_min, cfg.size_max), uni(cfg.size_min, cfg.size_max), uni(cfg.size_min, cfg.size_max));
  if (prim.kind == PrimitiveKind::Sphere) prim.size.y() = prim.size.z() = prim.size.x();
  if (prim.kind == PrimitiveKind::Cylinder) prim.size.y() = prim.size.x();

  InteractionSequence& seq = out.sequence;
  seq.fps = cfg.fps;
  seq.geometry = prim.sample_surface(cfg.num_points, rng);

  const int length = cfg.length_min + static_cast<int>(u(rng) * (cfg.length_max - cfg.length_min + 1));
  const int l = std::min(length, cfg.length_max);
  std::array<int, 5> bounds{};
  {
    double acc = 0.0;
    for (int p = 0; p < 4; ++p) {
      bounds[static_cast<std::size_t>(p)] = static_cast<int>(std::lround(acc * l));
      acc += cfg.phases[static_cast<std::size_t>(p)];
    }
    bounds[4] = l;
  }
  meta.phase_start = bounds;

  // object start/target on the table plane z = 0
  const double rest_z = prim.half_height();
  const Vec3 start_pos(uni(-0.12, 0.12), uni(-0.05, 0.10), rest_z);
  const double start_yaw = uni(-M_PI, M_PI);
  Vec3 target_pos;
  for (int tries = 0;; ++tries) {
    const double dist = uni(cfg.move_distance_min, cfg.move_distance_max);
    const double dir = uni(-M_PI, M_PI);
    target_pos = start_pos + Vec3(dist * std::cos(dir), dist * std::sin(dir), 0.0);
    if ((target_pos.x() > -0.05 && target_pos.x() < 0.35 && target_pos.y() > -0.15 && target_pos.y() < 0.3) ||
        tries > 50)
      break;
  }
  const double target_yaw = start_yaw + uni(-0.6, 0.6);
  const RigidTransform obj_start(Rotation::from_axis_angle(Vec3(0, 0, start_yaw)), start_pos);
  const RigidTransform obj_target(Rotation::from_axis_angle(Vec3(0, 0, target_yaw)), target_pos);

  // hands
  auto& hands = seq.hands;
  hands.right_shape = HandShape{};
  hands.left_shape = HandShape{};
  hands.left_shape.left = true;
  for (int k = 0; k < 7; ++k) {
    hands.right_shape.beta[static_cast<std::size_t>(k)] = uni(0.9, 1.1);
    hands.left_shape.beta[static_cast<std::size_t>(k)] = hands.right_shape.beta[static_cast<std::size_t>(k)];
  }

  // palm down, fingers forward (+y): hand Y = +z, hand Z = +y, X = Y x Z
  Mat3 palm_down;
  palm_down.col(1) = Vec3::UnitZ();
  palm_down.col(2) = Vec3::UnitY();
  palm_down.col(0) = palm_down.col(1).cross(palm_down.col(2));
  const Vec3 right_start(uni(0.10, 0.20), uni(-0.35, -0.28), uni(0.04, 0.08));
  const Vec3 left_rest(uni(-0.32, -0.26), uni(-0.33, -0.27), uni(0.03, 0.05));
  const std::array<double, 5> no_abd{};
  const auto open_theta = detail::flexion_pose(0.1, 0.1, 0.05, 0.5, no_abd);

  // grasp: palm faces the contact normal, slide in along the normal until first contact
  detail::HandTarget grasp;
  Vec3 contact_local = Vec3::Zero(), normal_local = Vec3::UnitZ();
  bool found = false;
  for (int attempt = 0; attempt < 60 && !found; ++attempt) {
    const std::size_t idx = static_cast<std::size_t>(u(rng) * static_cast<double>(seq.geometry.size())) %
                            seq.geometry.size();
    const Vec3 pc = obj_start.apply(seq.geometry.points[idx]);
    const Vec3 nc = obj_start.rotation * seq.geometry.normals[idx];
    const Vec3 to_hand = (right_start - pc).normalized();
    if (nc.z() < -0.3 || pc.z() < 0.01 || nc.dot(to_hand) < 0.0) continue;
    Vec3 ref = std::abs(nc.z()) < 0.7 ? Vec3::UnitZ() : Vec3::UnitY();
    Vec3 fingers = (ref - ref.dot(nc) * nc).normalized();
    fingers = so3_exp(nc * uni(-0.5, 0.5)) * fingers;
    Mat3 r;
    r.col(1) = nc;
    r.col(2) = fingers;
    r.col(0) = nc.cross(fingers);

    std::array<double, 5> abd{};
    for (auto& a : abd) a = uni(-0.1, 0.1);
    const auto theta = detail::flexion_pose(uni(0.3, 0.8), uni(0.4, 1.0), uni(0.2, 0.6), uni(0.4, 0.8), abd);
    // the middle-finger PIP travels along the contact normal through pc
    HandPose local_pose;
    local_pose.theta = theta;
    const Vec3 anchor = r * forward_kinematics(hands.right_shape, local_pose)[10];
    auto hand_at = [&](double s) {
      return detail::make_pose(RigidTransform(Rotation(r), pc - anchor + nc * s), theta);
    };
    auto clearance = [&](double s) {
      return detail::min_joint_sdf(prim, obj_start, hands.right_shape, hand_at(s));
    };
    double hi = 0.30;
    if (clearance(hi) < cfg.grasp_clearance) continue;
    double lo = hi;
    while (lo > -0.1 && clearance(lo) >= cfg.grasp_clearance) {
      hi = lo;
      lo -= 0.001;
    }
    if (lo <= -0.1) continue;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      (clearance(mid) >= cfg.grasp_clearance ? hi : lo) = mid;
    }
    const HandPose candidate = hand_at(hi);
    // require a joint within 0.7 tau of an actual sampled surface point
    const auto joints = forward_kinematics(hands.right_shape, candidate);
    const auto world = posed_points(seq.geometry, obj_start);
    double closest = std::numeric_limits<double>::infinity();
    for (const auto& j : joints) closest = std::min(closest, nearest_point(j, world).distance);
    if (closest >= 0.007) continue;
    grasp.pose = RigidTransform(candidate.rotation(), candidate.global_trans);
    grasp.theta = theta;
    contact_local = seq.geometry.points[idx];
    normal_local = seq.geometry.normals[idx];
    meta.contact_point = idx;
    found = true;
  }
  if (!found) throw Error("could not place a grasp for seed " + std::to_string(seed));

  const RigidTransform grasp_rel = obj_start.inverse() * grasp.pose;
  const Mat3 start_rot = palm_down;
  const double sway_phase = uni(0.0, 2 * M_PI);

  for (int i = 0; i < l; ++i) {
    HandPose right, left;
    RigidTransform obj = obj_start;
    if (i < bounds[1]) {
      const double s = bounds[1] > 1 ? static_cast<double>(i) / (bounds[1] - 1) : 1.0;
      const Vec3 pre = grasp.pose.translation + (obj_start.rotation * normal_local) * cfg.approach_standoff;
      Vec3 pos;
      Mat3 rot;
      if (s < 0.7) {
        const double w = detail::smoothstep(s / 0.7);
        pos = detail::lerp(right_start, pre, w);
        rot = detail::slerp(start_rot, grasp.pose.rotation.matrix(), w);
      } else {
        pos = detail::lerp(pre, grasp.pose.translation, detail::smoothstep((s - 0.7) / 0.3));
        rot = grasp.pose.rotation.matrix();
      }
      const double flex = detail::smoothstep((s - 0.5) / 0.5);
      std::array<double, kThetaDim> th{};
      for (int k = 0; k < kThetaDim; ++k)
        th[static_cast<std::size_t>(k)] = open_theta[static_cast<std::size_t>(k)] +
                                          flex * (grasp.theta[static_cast<std::size_t>(k)] -
                                                  open_theta[static_cast<std::size_t>(k)]);
      right = detail::make_pose(RigidTransform(Rotation(rot), pos), th);
    } else if (i < bounds[2]) {
      right = detail::make_pose(grasp.pose, grasp.theta);
    } else if (i < bounds[3]) {
      const int n = bounds[3] - bounds[2];
      const double s = detail::smoothstep(n > 1 ? static_cast<double>(i - bounds[2]) / (n - 1) : 1.0);
      const Vec3 pos = detail::lerp(obj_start.translation, obj_target.translation, s) +
                       Vec3(0, 0, cfg.lift_height * std::sin(M_PI * s));
      const double yaw = start_yaw + s * (target_yaw - start_yaw);
      obj = RigidTransform(Rotation::from_axis_angle(Vec3(0, 0, yaw)), pos);
      right = detail::make_pose(obj * grasp_rel, grasp.theta);
    } else {
      obj = obj_target;
      const int n = bounds[4] - bounds[3];
      const double s = detail::smoothstep(n > 1 ? static_cast<double>(i - bounds[3]) / (n - 1) : 1.0);
      const RigidTransform held = obj_target * grasp_rel;
      const Vec3 away = obj_target.rotation * normal_local;
      std::array<double, kThetaDim> th{};
      for (int k = 0; k < kThetaDim; ++k)
        th[static_cast<std::size_t>(k)] = grasp.theta[static_cast<std::size_t>(k)] +
                                          s * (open_theta[static_cast<std::size_t>(k)] -
                                               grasp.theta[static_cast<std::size_t>(k)]);
      right = detail::make_pose(RigidTransform(held.rotation, held.translation + away * (cfg.approach_standoff * s)),
                                th);
    }
    const double t = i / cfg.fps;
    const Vec3 sway(0.01 * std::sin(1.3 * t + sway_phase), 0.008 * std::sin(0.9 * t), 0.0);
    left = detail::make_pose(RigidTransform(Rotation(palm_down), left_rest + sway),
                             detail::flexion_pose(0.25, 0.3, 0.15, 0.5, no_abd));
    hands.right.push_back(right);
    hands.left.push_back(left);
    seq.object.push_back(obj);
  }

  // gaze leads the interaction region; occasional saccades
  const int lead = static_cast<int>(std::lround(cfg.gaze_lead_s * cfg.fps));
  const double saccade_start_prob = cfg.saccade_fraction / cfg.saccade_frames;
  int saccade_left = 0;
  Vec3 saccade_target = Vec3::Zero();
  for (int i = 0; i < l; ++i) {
    const int ahead = std::min(i + lead, l - 1);
    const Vec3 focus = seq.object.pose(static_cast<std::size_t>(ahead)).apply(contact_local);
    Vec3 gz = focus + cfg.gaze_jitter * Vec3(g(rng), g(rng), g(rng));
    if (saccade_left == 0 && u(rng) < saccade_start_prob) {
      saccade_left = cfg.saccade_frames;
      Vec3 d(g(rng), g(rng), 0.3 * g(rng));
      saccade_target = focus + d.normalized() * uni(0.1, 0.3);
    }
    if (saccade_left > 0) {
      gz = saccade_target + cfg.gaze_jitter * Vec3(g(rng), g(rng), g(rng));
      --saccade_left;
    }
    seq.gaze.push_back(gz);
  }
  seq.validate();
  return out;
}

/// Gaussian random walk of the given length starting at start.
inline std::vector<Vec3> random_walk(const Vec3& start, std::size_t length, double step, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, step);
  std::vector<Vec3> out;
  out.reserve(length);
  Vec3 p = start;
  for (std::size_t i = 0; i < length; ++i) {
    if (i > 0) p += Vec3(g(rng), g(rng), g(rng));
    out.push_back(p);
  }
  return out;
}

/// Same sequence with the object and both wrists replaced by independent
/// random walks from their first-frame positions; rotations and articulation kept.
inline InteractionSequence random_walk_variant(const InteractionSequence& seq, std::uint64_t seed,
                                               double step = 0.01) {
  std::mt19937_64 rng(seed);
  InteractionSequence out = seq;
  const std::size_t l = seq.length();
  out.object.trans = random_walk(seq.object.trans.front(), l, step, rng);
  for (auto* poses : {&out.hands.left, &out.hands.right}) {
    const auto walk = random_walk(poses->front().global_trans, l, step, rng);
    for (std::size_t i = 0; i < l; ++i) (*poses)[i].global_trans = walk[i];
  }
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct DatasetEntry {
  std::string name;
  std::uint64_t seed = 0;
  bool train = true;
};

struct Dataset {
  std::vector<InteractionSequence> train;
  std::vector<InteractionSequence> val;
  std::vector<DatasetEntry> manifest;
  std::uint64_t seed = 0;
};

/// Per-item seeds and the train/val assignment; 80/20 by seeded shuffle.
inline std::vector<DatasetEntry> plan_dataset(int count, std::uint64_t seed) {
  if (count < 2) throw Error("dataset count must be at least 2");
  std::vector<DatasetEntry> entries(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%04d", i);
    entries[static_cast<std::size_t>(i)] = {name, splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i))), true};
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = std::min(count - 1, static_cast<int>(std::lround(0.8 * count)));
  for (int k = n_train; k < count; ++k) entries[order[static_cast<std::size_t>(k)]].train = false;
  return entries;
}

inline Dataset generate_dataset(const SceneConfig& cfg, int count, std::uint64_t seed) {
  Dataset d;
  d.seed = seed;
  d.manifest = plan_dataset(count, seed);
  for (const auto& e : d.manifest) {
    auto scene = generate_scene(cfg, e.seed);
    (e.train ? d.train : d.val).push_back(std::move(scene.sequence));
  }
  return d;
}

inline json manifest_json(const Dataset& d, const SceneConfig& cfg) {
  json items = json::array();
  for (const auto& e : d.manifest)
    items.push_back({{"name", e.name}, {"seed", e.seed}, {"split", e.train ? "train" : "val"}});
  return {{"version", 1},
          {"seed", d.seed},
          {"count", d.manifest.size()},
          {"train", d.train.size()},
          {"val", d.val.size()},
          {"config", scene_config_json(cfg)},
          {"items", items}};
}

}  // namespace ghoi
