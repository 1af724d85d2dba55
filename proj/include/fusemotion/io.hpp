#pragma once

#include "fusemotion/kinematics.hpp"
#include "fusemotion/scene.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fusemotion {

inline constexpr int kMotionFileVersion = 1;
inline constexpr int kSceneFileVersion = 1;
inline constexpr int kCheckpointVersion = 1;

namespace io_detail {

static_assert(std::endian::native == std::endian::little, "payloads are written in native little-endian order");

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  FUSEMOTION_CHECK(in.good(), DataError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file then renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    FUSEMOTION_CHECK(out.good(), DataError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    FUSEMOTION_CHECK(out.good(), DataError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Key/value text header terminated by an "end_header" line.
struct Header {
  std::string magic;
  std::map<std::string, std::string> fields;
  size_t payload_offset = 0;

  const std::string& get(const std::string& key) const {
    auto it = fields.find(key);
    FUSEMOTION_CHECK(it != fields.end(), FormatError, "header is missing '" + key + "'");
    return it->second;
  }

  long get_long(const std::string& key) const {
    try {
      size_t used = 0;
      const long v = std::stol(get(key), &used);
      FUSEMOTION_CHECK(used == get(key).size(), FormatError, "bad integer for '" + key + "'");
      return v;
    } catch (const std::logic_error&) {
      throw FormatError("bad integer for '" + key + "'");
    }
  }

  double get_double(const std::string& key) const {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      throw FormatError("bad number for '" + key + "'");
    }
  }
};

inline Header parse_header(const std::string& bytes, const std::string& expected_magic, int expected_version) {
  Header h;
  size_t pos = 0;
  bool first = true;
  bool ended = false;
  // Headers are short; refuse to scan megabytes of payload looking for one.
  const size_t limit = std::min<size_t>(bytes.size(), 1 << 16);
  while (pos < limit) {
    const size_t nl = bytes.find('\n', pos);
    FUSEMOTION_CHECK(nl != std::string::npos && nl < limit + 1, FormatError, "unterminated header line");
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (first) {
      h.magic = line;
      FUSEMOTION_CHECK(line == expected_magic, FormatError, "bad magic: expected '" + expected_magic + "'");
      first = false;
      continue;
    }
    if (line == "end_header") {
      ended = true;
      break;
    }
    const size_t sp = line.find(' ');
    FUSEMOTION_CHECK(sp != std::string::npos && sp > 0, FormatError, "malformed header line: " + line);
    h.fields[line.substr(0, sp)] = line.substr(sp + 1);
  }
  FUSEMOTION_CHECK(!first, FormatError, "empty file");
  FUSEMOTION_CHECK(ended, FormatError, "missing end_header");
  h.payload_offset = pos;
  const long version = h.get_long("version");
  if (version != expected_version) {
    throw VersionError(
        "unsupported version " + std::to_string(version) + " (expected " + std::to_string(expected_version) + ")");
  }
  return h;
}

inline void append_f32(std::string& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      char buf[4];
      std::memcpy(buf, &v, 4);
      out.append(buf, 4);
    }
  }
}

inline Mat read_f32(const std::string& bytes, size_t& pos, Eigen::Index rows, Eigen::Index cols) {
  const size_t need = static_cast<size_t>(rows * cols) * 4;
  if (bytes.size() < pos + need) {
    throw TruncationError("payload truncated: need " + std::to_string(need) + " bytes at offset " + std::to_string(pos));
  }
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      float v;
      std::memcpy(&v, bytes.data() + pos, 4);
      pos += 4;
      m(r, c) = v;
    }
  }
  return m;
}

inline std::string format_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

} // namespace io_detail

// ---------------------------------------------------------------------------
// Motion files

struct MotionFile {
  MotionSequence motion;
  Skeleton skeleton = Skeleton::standard();
};

inline std::string encode_motion_file(const MotionFile& file) {
  const MotionSequence& m = file.motion;
  m.validate_shape();
  file.skeleton.validate();
  std::ostringstream h;
  h << "fusemotion-motion\n";
  h << "version " << kMotionFileVersion << "\n";
  h << "fps " << io_detail::format_double(m.fps) << "\n";
  h << "joint_count " << kNumJoints << "\n";
  h << "parents";
  for (int p : file.skeleton.parents) {
    h << ' ' << p;
  }
  h << "\noffsets";
  for (const Vec3& o : file.skeleton.offsets) {
    h << ' ' << io_detail::format_double(o.x()) << ' ' << io_detail::format_double(o.y()) << ' '
      << io_detail::format_double(o.z());
  }
  h << "\nframes " << m.frames() << "\n";
  h << "end_header\n";
  std::string out = h.str();
  io_detail::append_f32(out, m.root_translation);
  io_detail::append_f32(out, m.local_rotations);
  return out;
}

inline MotionFile decode_motion_file(const std::string& bytes) {
  const auto h = io_detail::parse_header(bytes, "fusemotion-motion", kMotionFileVersion);
  FUSEMOTION_CHECK(h.get_long("joint_count") == kNumJoints, FormatError, "motion file must have 22 joints");
  const long frames = h.get_long("frames");
  FUSEMOTION_CHECK(frames >= 2, FormatError, "motion file needs at least 2 frames");
  MotionFile out;
  {
    std::istringstream ps(h.get("parents"));
    out.skeleton.parents.clear();
    int p;
    while (ps >> p) {
      out.skeleton.parents.push_back(p);
    }
    std::istringstream os(h.get("offsets"));
    out.skeleton.offsets.clear();
    double x, y, z;
    while (os >> x >> y >> z) {
      out.skeleton.offsets.emplace_back(x, y, z);
    }
    try {
      out.skeleton.validate();
    } catch (const Error& e) {
      throw FormatError(std::string("invalid skeleton in header: ") + e.what());
    }
  }
  size_t pos = h.payload_offset;
  out.motion.fps = h.get_double("fps");
  out.motion.root_translation = io_detail::read_f32(bytes, pos, frames, 3);
  out.motion.local_rotations = io_detail::read_f32(bytes, pos, frames, kNumJoints * 6);
  FUSEMOTION_CHECK(pos == bytes.size(), FormatError, "trailing bytes after motion payload");
  FUSEMOTION_CHECK(
      out.motion.root_translation.allFinite() && out.motion.local_rotations.allFinite(), FormatError,
      "non-finite values in motion payload");
  return out;
}

inline void save_motion_file(const std::filesystem::path& path, const MotionFile& file) {
  io_detail::write_file_atomic(path, encode_motion_file(file));
}

inline MotionFile load_motion_file(const std::filesystem::path& path) {
  return decode_motion_file(io_detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Scene files

struct SceneFile {
  ScenePointCloud cloud;
  double floor_height = 0.0;
};

inline std::string encode_scene_file(const SceneFile& file) {
  FUSEMOTION_CHECK(file.cloud.size() >= 1, ValidationError, "scene file needs at least one point");
  std::ostringstream h;
  h << "fusemotion-scene\n";
  h << "version " << kSceneFileVersion << "\n";
  h << "point_count " << file.cloud.size() << "\n";
  h << "floor_height " << io_detail::format_double(file.floor_height) << "\n";
  h << "end_header\n";
  std::string out = h.str();
  io_detail::append_f32(out, file.cloud.points);
  return out;
}

inline SceneFile decode_scene_file(const std::string& bytes) {
  const auto h = io_detail::parse_header(bytes, "fusemotion-scene", kSceneFileVersion);
  const long count = h.get_long("point_count");
  FUSEMOTION_CHECK(count >= 1, FormatError, "scene file needs at least one point");
  SceneFile out;
  out.floor_height = h.get_double("floor_height");
  size_t pos = h.payload_offset;
  out.cloud.points = io_detail::read_f32(bytes, pos, count, 3);
  FUSEMOTION_CHECK(pos == bytes.size(), FormatError, "trailing bytes after scene payload");
  FUSEMOTION_CHECK(out.cloud.points.allFinite(), FormatError, "non-finite scene points");
  return out;
}

inline void save_scene_file(const std::filesystem::path& path, const SceneFile& file) {
  io_detail::write_file_atomic(path, encode_scene_file(file));
}

inline SceneFile load_scene_file(const std::filesystem::path& path) {
  return decode_scene_file(io_detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Checkpoints: header + named float64 tensors.

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

using TensorMap = std::map<std::string, Mat>;

inline std::string encode_checkpoint(const std::string& kind, std::uint64_t config_hash, const TensorMap& tensors) {
  std::ostringstream h;
  h << "fusemotion-checkpoint\n";
  h << "version " << kCheckpointVersion << "\n";
  h << "kind " << kind << "\n";
  h << "config_hash " << hex64(config_hash) << "\n";
  h << "tensor_count " << tensors.size() << "\n";
  h << "end_header\n";
  std::string out = h.str();
  for (const auto& [name, m] : tensors) {
    out += name + " " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double v = m(r, c);
        char buf[8];
        std::memcpy(buf, &v, 8);
        out.append(buf, 8);
      }
    }
  }
  return out;
}

inline TensorMap decode_checkpoint(const std::string& bytes, const std::string& kind, std::uint64_t config_hash) {
  io_detail::Header h;
  try {
    h = io_detail::parse_header(bytes, "fusemotion-checkpoint", kCheckpointVersion);
  } catch (const VersionError&) {
    throw;
  } catch (const DataError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
  FUSEMOTION_CHECK(h.get("kind") == kind, CheckpointError, "checkpoint holds '" + h.get("kind") + "', expected '" + kind + "'");
  if (h.get("config_hash") != hex64(config_hash)) {
    throw ConfigMismatchError(
        "checkpoint config hash " + h.get("config_hash") + " does not match current config " + hex64(config_hash));
  }
  const long count = h.get_long("tensor_count");
  TensorMap out;
  size_t pos = h.payload_offset;
  for (long i = 0; i < count; ++i) {
    const size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) {
      throw TruncationError("checkpoint truncated in tensor header");
    }
    std::istringstream line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    std::string name;
    long rows = 0;
    long cols = 0;
    FUSEMOTION_CHECK(static_cast<bool>(line >> name >> rows >> cols) && rows >= 0 && cols >= 0, CheckpointError, "bad tensor header");
    const size_t need = static_cast<size_t>(rows * cols) * 8;
    if (bytes.size() < pos + need) {
      throw TruncationError("checkpoint truncated in tensor '" + name + "'");
    }
    Mat m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        double v;
        std::memcpy(&v, bytes.data() + pos, 8);
        pos += 8;
        m(r, c) = v;
      }
    }
    out.emplace(name, std::move(m));
  }
  FUSEMOTION_CHECK(pos == bytes.size(), CheckpointError, "trailing bytes after checkpoint tensors");
  return out;
}

inline void save_checkpoint(
    const std::filesystem::path& path, const std::string& kind, std::uint64_t config_hash, const TensorMap& tensors) {
  io_detail::write_file_atomic(path, encode_checkpoint(kind, config_hash, tensors));
}

inline TensorMap load_checkpoint(const std::filesystem::path& path, const std::string& kind, std::uint64_t config_hash) {
  if (!std::filesystem::exists(path)) {
    throw CheckpointError("checkpoint not found: " + path.string());
  }
  return decode_checkpoint(io_detail::read_file(path), kind, config_hash);
}

/// Hash of the checkpoint file bytes, for reproducibility records.
inline std::string file_hash(const std::filesystem::path& path) {
  return hex64(fnv1a(io_detail::read_file(path)));
}

} // namespace fusemotion
