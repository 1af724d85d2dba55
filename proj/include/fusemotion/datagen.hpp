#pragma once

#include "fusemotion/io.hpp"
#include "fusemotion/kinematics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fusemotion {

struct CorpusSpec {
  int scenes = 30;
  int sequences = 300;
  int frames = 240;
  double fps = 30.0;
  double obstacle_density = 0.05; // boxes per square meter of floor
  double floor_half_extent_m = 4.0;
  double point_spacing_m = 0.08;
  double test_fraction = 0.3;
  double floor_range_m = 0.3;  // floor height ~ U[-range, range]
  double max_crouch_m = 0.3;   // pelvis drop ~ U[0, max]
  double ankle_clearance_m = 0.08;

  void validate() const {
    FUSEMOTION_CHECK(scenes >= 1 && sequences >= 1, ValidationError, "corpus needs at least one scene and sequence");
    FUSEMOTION_CHECK(frames >= 2 && fps > 0.0, ValidationError, "corpus needs frames >= 2 and fps > 0");
    FUSEMOTION_CHECK(obstacle_density >= 0.0, ValidationError, "obstacle density must be >= 0");
    FUSEMOTION_CHECK(floor_half_extent_m >= 2.0, ValidationError, "floor half extent must be >= 2 m");
    FUSEMOTION_CHECK(point_spacing_m > 0.0, ValidationError, "point spacing must be > 0");
    FUSEMOTION_CHECK(test_fraction >= 0.0 && test_fraction < 1.0, ValidationError, "test fraction must be in [0, 1)");
    FUSEMOTION_CHECK(floor_range_m >= 0.0 && max_crouch_m >= 0.0 && max_crouch_m < 0.6, ValidationError, "bad floor/crouch range");
    FUSEMOTION_CHECK(ankle_clearance_m > 0.0, ValidationError, "ankle clearance must be > 0");
  }
};

struct BoxObstacle {
  Vec3 min_corner;
  Vec3 max_corner;
};

struct SyntheticScene {
  SceneFile file;
  std::vector<BoxObstacle> boxes;
};

/// Generation parameters kept for analysis and tests.
struct WalkerParams {
  double speed = 0.0;
  double gait_hz = 0.0;
  double crouch_m = 0.0;
  double hip_amplitude = 0.0;
  double arm_amplitude = 0.0;
};

struct SyntheticSequence {
  std::string name;
  MotionFile motion;
  int scene = 0;
  bool test = false;
  WalkerParams params;
};

struct SyntheticCorpus {
  std::vector<SyntheticScene> scenes;
  std::vector<SyntheticSequence> sequences;
};

namespace datagen_detail {

inline Mat3 rot_x(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}
inline Mat3 rot_y(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}
inline Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

inline void add_face_grid(std::vector<Vec3>& pts, const Vec3& origin, const Vec3& u, const Vec3& v, double spacing) {
  const int nu = std::max(1, static_cast<int>(std::round(u.norm() / spacing)));
  const int nv = std::max(1, static_cast<int>(std::round(v.norm() / spacing)));
  for (int i = 0; i <= nu; ++i) {
    for (int j = 0; j <= nv; ++j) {
      pts.push_back(origin + u * (static_cast<double>(i) / nu) + v * (static_cast<double>(j) / nv));
    }
  }
}

/// Horizontal distance from a point to a box footprint (0 inside).
inline double footprint_distance(const BoxObstacle& b, double x, double y) {
  const double dx = std::max({b.min_corner.x() - x, 0.0, x - b.max_corner.x()});
  const double dy = std::max({b.min_corner.y() - y, 0.0, y - b.max_corner.y()});
  return std::hypot(dx, dy);
}

inline SyntheticScene make_scene(const CorpusSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticScene scene;
  const double floor = rng.uniform(-spec.floor_range_m, spec.floor_range_m);
  const double l = spec.floor_half_extent_m;
  const int count = static_cast<int>(std::round(spec.obstacle_density * 4.0 * l * l));
  for (int i = 0; i < count; ++i) {
    const double sx = rng.uniform(0.4, 1.2);
    const double sy = rng.uniform(0.4, 1.2);
    const double h = rng.uniform(0.3, 1.0);
    const double cx = rng.uniform(-l + 0.6, l - 0.6);
    const double cy = rng.uniform(-l + 0.6, l - 0.6);
    scene.boxes.push_back(BoxObstacle{Vec3(cx - sx / 2, cy - sy / 2, floor), Vec3(cx + sx / 2, cy + sy / 2, floor + h)});
  }
  std::vector<Vec3> pts;
  const double s = spec.point_spacing_m;
  const int n = static_cast<int>(std::floor(2.0 * l / s));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double x = -l + i * s + rng.uniform(-0.2, 0.2) * s;
      const double y = -l + j * s + rng.uniform(-0.2, 0.2) * s;
      bool covered = false;
      for (const auto& b : scene.boxes) {
        covered = covered || footprint_distance(b, x, y) == 0.0;
      }
      if (!covered) {
        pts.emplace_back(x, y, floor);
      }
    }
  }
  for (const auto& b : scene.boxes) {
    const Vec3 d = b.max_corner - b.min_corner;
    const Vec3 ex(d.x(), 0, 0);
    const Vec3 ey(0, d.y(), 0);
    const Vec3 ez(0, 0, d.z());
    add_face_grid(pts, b.min_corner + ez, ex, ey, s);
    add_face_grid(pts, b.min_corner, ex, ez, s);
    add_face_grid(pts, b.min_corner + ey, ex, ez, s);
    add_face_grid(pts, b.min_corner, ey, ez, s);
    add_face_grid(pts, b.min_corner + ex, ey, ez, s);
  }
  scene.file.floor_height = floor;
  scene.file.cloud.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) {
    scene.file.cloud.points.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  }
  // The payload is float32; keep the in-memory scene identical to what is saved.
  scene.file.cloud.points = scene.file.cloud.points.cast<float>().cast<double>();
  return scene;
}

/// Pelvis xy path and heading following random waypoints; empty on collision.
inline bool walk_path(
    const CorpusSpec& spec, const SyntheticScene& scene, double speed, Rng& rng, std::vector<Vec3>& path,
    std::vector<double>& heading) {
  const double l = spec.floor_half_extent_m;
  const double margin = 0.6;
  auto clear = [&](double x, double y) {
    if (std::abs(x) > l - margin || std::abs(y) > l - margin) {
      return false;
    }
    for (const auto& b : scene.boxes) {
      if (footprint_distance(b, x, y) < margin) {
        return false;
      }
    }
    return true;
  };
  Vec3 p(rng.uniform(-l + margin, l - margin), rng.uniform(-l + margin, l - margin), 0.0);
  if (!clear(p.x(), p.y())) {
    return false;
  }
  double theta = rng.uniform(-kPi, kPi);
  std::vector<Vec3> waypoints;
  for (int i = 0; i < 4; ++i) {
    waypoints.emplace_back(rng.uniform(-l + margin, l - margin), rng.uniform(-l + margin, l - margin), 0.0);
  }
  size_t target = 0;
  const double dt = 1.0 / spec.fps;
  const double max_turn = 0.8; // rad/s
  path.clear();
  heading.clear();
  for (int f = 0; f < spec.frames; ++f) {
    path.push_back(p);
    heading.push_back(theta);
    if ((waypoints[target] - p).norm() < 0.5 && target + 1 < waypoints.size()) {
      ++target;
    }
    const Vec3 to = waypoints[target] - p;
    double err = std::atan2(to.y(), to.x()) - theta;
    err = std::remainder(err, 2.0 * kPi);
    theta += std::clamp(2.0 * err, -max_turn, max_turn) * dt;
    p += speed * dt * Vec3(std::cos(theta), std::sin(theta), 0.0);
    if (!clear(p.x(), p.y())) {
      return false;
    }
  }
  return true;
}

/// Knee bend that lowers the pelvis by `drop` with thigh and shank tilted equally.
inline double crouch_knee_angle(const Skeleton& sk, double drop) {
  const double leg = std::abs(sk.offsets[joints::kLeftKnee].z()) + std::abs(sk.offsets[joints::kLeftAnkle].z());
  return 2.0 * std::acos(std::clamp(1.0 - drop / leg, -1.0, 1.0));
}

inline SyntheticSequence make_walker(const CorpusSpec& spec, const SyntheticScene& scene, std::uint64_t seed) {
  using namespace joints;
  Rng rng(seed);
  const Skeleton sk = Skeleton::standard();
  SyntheticSequence seq;
  WalkerParams& wp = seq.params;
  wp.crouch_m = rng.uniform(0.0, spec.max_crouch_m);
  wp.hip_amplitude = rng.uniform(0.3, 0.5);
  wp.arm_amplitude = rng.uniform(0.25, 0.5);

  std::vector<Vec3> path;
  std::vector<double> heading;
  bool ok = false;
  for (int attempt = 0; attempt < 400 && !ok; ++attempt) {
    wp.speed = rng.uniform(0.5, 1.3);
    ok = walk_path(spec, scene, wp.speed, rng, path, heading);
  }
  FUSEMOTION_CHECK(ok, ValidationError, "could not place a collision-free walker; lower the obstacle density");
  wp.gait_hz = std::clamp(wp.speed / (2.0 * kPi * 0.8 * wp.hip_amplitude), 0.6, 1.1);

  const double knee0 = crouch_knee_angle(sk, wp.crouch_m);
  const double phase0 = rng.uniform(0.0, 2.0 * kPi);
  const double look_hz = rng.uniform(0.05, 0.2);
  const double look_phase = rng.uniform(0.0, 2.0 * kPi);
  const double look_amp = rng.uniform(0.0, 0.4);
  const double elbow0 = rng.uniform(0.2, 0.5);
  const double arm_down = rng.uniform(1.2, 1.4);

  MotionSequence m;
  m.fps = spec.fps;
  m.root_translation = Eigen::MatrixX3d::Zero(spec.frames, 3);
  m.local_rotations = Mat(spec.frames, kNumJoints * 6);
  for (int f = 0; f < spec.frames; ++f) {
    const double t = f / spec.fps;
    const double phi = phase0 + 2.0 * kPi * wp.gait_hz * t;
    std::vector<Mat3> r(kNumJoints, Mat3::Identity());
    r[kPelvis] = rot_z(heading[static_cast<size_t>(f)] + 0.08 * std::sin(phi));
    r[kSpine3] = rot_z(-0.08 * std::sin(phi));
    r[kNeck] = rot_z(look_amp * std::sin(2.0 * kPi * look_hz * t + look_phase));
    for (int side = 0; side < 2; ++side) {
      const double phase = side == 0 ? phi : phi + kPi;
      const double hip = -wp.hip_amplitude * std::sin(phase) - 0.5 * knee0;
      const double swing = std::max(0.0, std::cos(phase));
      const double knee = knee0 + 0.9 * wp.hip_amplitude * swing * swing;
      r[side == 0 ? kLeftHip : kRightHip] = rot_y(hip);
      r[side == 0 ? kLeftKnee : kRightKnee] = rot_y(knee);
      r[side == 0 ? kLeftAnkle : kRightAnkle] = rot_y(-(hip + knee));
    }
    // Arms swing opposite to the leg on the same side.
    const double s = wp.arm_amplitude * std::sin(phi);
    const double elbow = elbow0 + 0.3 * wp.arm_amplitude * (1.0 + std::sin(phi));
    const double elbow_r = elbow0 + 0.3 * wp.arm_amplitude * (1.0 - std::sin(phi));
    r[kLeftShoulder] = rot_y(s) * rot_x(-arm_down);
    r[kRightShoulder] = rot_y(-s) * rot_x(arm_down);
    r[kLeftElbow] = rot_z(-elbow);
    r[kRightElbow] = rot_z(elbow_r);
    for (int j = 0; j < kNumJoints; ++j) {
      m.set_rotation6d(f, j, matrix_to_rot6d(r[static_cast<size_t>(j)]));
    }
    m.root_translation.row(f) = Eigen::RowVector3d(path[static_cast<size_t>(f)].x(), path[static_cast<size_t>(f)].y(), 0.0);
  }
  // Lift each frame so the lower ankle sits at the clearance height above the floor.
  const Mat pos = forward_kinematics(sk, m).positions;
  for (int f = 0; f < spec.frames; ++f) {
    const double low = std::min(pos(f, 3 * kLeftAnkle + 2), pos(f, 3 * kRightAnkle + 2));
    m.root_translation(f, 2) = scene.file.floor_height + spec.ankle_clearance_m - low;
  }
  m.root_translation = m.root_translation.cast<float>().cast<double>();
  m.local_rotations = m.local_rotations.cast<float>().cast<double>();
  seq.motion = MotionFile{m, sk};
  return seq;
}

inline std::string indexed(const std::string& prefix, int i) {
  std::ostringstream s;
  s << prefix << std::setw(4) << std::setfill('0') << i;
  return s.str();
}

} // namespace datagen_detail

/// Procedural scenes and walkers, deterministic per seed. Scenes and
/// sequences draw from independent derived streams.
inline SyntheticCorpus generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticCorpus out;
  for (int i = 0; i < spec.scenes; ++i) {
    out.scenes.push_back(datagen_detail::make_scene(spec, derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  for (int i = 0; i < spec.sequences; ++i) {
    const int scene = i % spec.scenes;
    SyntheticSequence seq = datagen_detail::make_walker(
        spec, out.scenes[static_cast<size_t>(scene)], derive_seed(seed, 1000000 + static_cast<std::uint64_t>(i)));
    seq.name = datagen_detail::indexed("seq_", i);
    seq.scene = scene;
    out.sequences.push_back(std::move(seq));
  }
  // 70:30 split by shuffled sequence order.
  std::vector<int> order(static_cast<size_t>(spec.sequences));
  for (int i = 0; i < spec.sequences; ++i) {
    order[static_cast<size_t>(i)] = i;
  }
  Rng rng(derive_seed(seed, 999999));
  for (int i = spec.sequences - 1; i > 0; --i) {
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
  }
  const int test_count = static_cast<int>(std::round(spec.test_fraction * spec.sequences));
  for (int i = 0; i < test_count; ++i) {
    out.sequences[static_cast<size_t>(order[static_cast<size_t>(i)])].test = true;
  }
  return out;
}

/// Writes scenes/, motions/ and a split manifest under `dir`.
inline void save_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
  std::ostringstream manifest;
  manifest << "fusemotion-split\n";
  for (size_t i = 0; i < corpus.scenes.size(); ++i) {
    save_scene_file(dir / "scenes" / (datagen_detail::indexed("scene_", static_cast<int>(i)) + ".scene"), corpus.scenes[i].file);
  }
  for (const auto& s : corpus.sequences) {
    save_motion_file(dir / "motions" / (s.name + ".motion"), s.motion);
    manifest << s.name << ' ' << datagen_detail::indexed("scene_", s.scene) << ' ' << (s.test ? "test" : "train") << '\n';
  }
  io_detail::write_file_atomic(dir / "split.txt", manifest.str());
}

/// Reads a corpus written by save_corpus (or converted external data in the same layout).
inline SyntheticCorpus load_corpus(const std::filesystem::path& dir) {
  const std::string text = io_detail::read_file(dir / "split.txt");
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  FUSEMOTION_CHECK(line == "fusemotion-split", FormatError, "split manifest has a bad magic line");
  SyntheticCorpus out;
  std::map<std::string, int> scene_index;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream ls(line);
    std::string name, scene, split;
    FUSEMOTION_CHECK(static_cast<bool>(ls >> name >> scene >> split), FormatError, "bad split line: " + line);
    FUSEMOTION_CHECK(split == "train" || split == "test", FormatError, "bad split tag: " + split);
    auto it = scene_index.find(scene);
    if (it == scene_index.end()) {
      SyntheticScene s;
      s.file = load_scene_file(dir / "scenes" / (scene + ".scene"));
      out.scenes.push_back(std::move(s));
      it = scene_index.emplace(scene, static_cast<int>(out.scenes.size()) - 1).first;
    }
    SyntheticSequence seq;
    seq.name = name;
    seq.scene = it->second;
    seq.test = split == "test";
    seq.motion = load_motion_file(dir / "motions" / (name + ".motion"));
    out.sequences.push_back(std::move(seq));
  }
  FUSEMOTION_CHECK(!out.sequences.empty(), DataError, "corpus at " + dir.string() + " has no sequences");
  return out;
}

} // namespace fusemotion
