#pragma once

#include "ghoi/hoi_repr.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace ghoi {

using json = nlohmann::json;

inline constexpr int kSequenceFormatVersion = 1;

/// Write-then-rename so readers never observe partial files.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << text;
    if (!out) throw Error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json point_list_json(std::span<const Vec3> pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(vec3_json(p));
  return a;
}

inline std::vector<Vec3> point_list_from(const json& j) {
  std::vector<Vec3> out;
  for (const auto& e : j) out.push_back(vec3_from(e));
  return out;
}

inline json geometry_json(const PointCloud& g) {
  return {{"points", point_list_json(g.points)}, {"normals", point_list_json(g.normals)}};
}

inline PointCloud geometry_from(const json& j) {
  PointCloud g{point_list_from(j.at("points")), point_list_from(j.at("normals"))};
  g.validate();
  return g;
}

inline json object_motion_json(const ObjectMotion& o) {
  json rot = json::array(), trans = json::array();
  for (std::size_t i = 0; i < o.size(); ++i) {
    rot.push_back(o.rot6d[i]);
    trans.push_back(vec3_json(o.trans[i]));
  }
  return {{"rot6d", rot}, {"trans", trans}};
}

inline ObjectMotion object_motion_from(const json& j) {
  ObjectMotion o;
  for (const auto& r : j.at("rot6d")) o.rot6d.push_back(r.get<std::array<double, 6>>());
  for (const auto& t : j.at("trans")) o.trans.push_back(vec3_from(t));
  if (o.rot6d.size() != o.trans.size()) throw Error("object rot6d/trans length mismatch");
  return o;
}

/// Sequence format v1; units meters, rotations as 6D.
inline json sequence_json(const InteractionSequence& s) {
  json left = json::array(), right = json::array();
  for (std::size_t i = 0; i < s.length(); ++i) {
    left.push_back(to_params(s.hands.left[i], s.hands.left_shape));
    right.push_back(to_params(s.hands.right[i], s.hands.right_shape));
  }
  return {{"version", kSequenceFormatVersion},
          {"fps", s.fps},
          {"length", s.length()},
          {"gaze", point_list_json(s.gaze)},
          {"left", left},
          {"right", right},
          {"object", object_motion_json(s.object)},
          {"geometry", geometry_json(s.geometry)}};
}

namespace detail {

inline void read_hand_track(const json& rows, std::vector<HandPose>& poses, HandShape& shape) {
  bool first = true;
  for (const auto& row : rows) {
    const auto p = row.get<std::array<double, kHandParamDim>>();
    const auto beta = beta_from_params(p);
    if (first) {
      shape.beta = beta;
      first = false;
    } else if (beta != shape.beta) {
      throw Error("hand shape parameters vary across frames");
    }
    poses.push_back(pose_from_params(p));
  }
}

}  // namespace detail

inline InteractionSequence sequence_from_json(const json& j) {
  if (j.at("version").get<int>() != kSequenceFormatVersion) throw Error("unsupported sequence format version");
  InteractionSequence s;
  s.fps = j.at("fps").get<double>();
  s.gaze = point_list_from(j.at("gaze"));
  s.hands.left_shape.left = true;
  s.hands.right_shape.left = false;
  detail::read_hand_track(j.at("left"), s.hands.left, s.hands.left_shape);
  detail::read_hand_track(j.at("right"), s.hands.right, s.hands.right_shape);
  s.object = object_motion_from(j.at("object"));
  s.geometry = geometry_from(j.at("geometry"));
  if (j.at("length").get<std::size_t>() != s.length()) throw Error("declared length does not match gaze");
  s.validate();
  return s;
}

inline std::string sequence_to_string(const InteractionSequence& s) { return sequence_json(s).dump(); }

inline void write_sequence(const std::filesystem::path& path, const InteractionSequence& s) {
  write_text_atomic(path, sequence_to_string(s));
}

inline InteractionSequence read_sequence(const std::filesystem::path& path) {
  return sequence_from_json(json::parse(read_text(path)));
}

}  // namespace ghoi
