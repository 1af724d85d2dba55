#pragma once

#include "fusemotion/common.hpp"

#include <array>
#include <span>
#include <vector>

namespace fusemotion {

/// SMPL body joint indices for the first 22 joints.
namespace joints {
inline constexpr int kPelvis = 0;
inline constexpr int kLeftHip = 1;
inline constexpr int kRightHip = 2;
inline constexpr int kSpine1 = 3;
inline constexpr int kLeftKnee = 4;
inline constexpr int kRightKnee = 5;
inline constexpr int kSpine2 = 6;
inline constexpr int kLeftAnkle = 7;
inline constexpr int kRightAnkle = 8;
inline constexpr int kSpine3 = 9;
inline constexpr int kLeftFoot = 10;
inline constexpr int kRightFoot = 11;
inline constexpr int kNeck = 12;
inline constexpr int kLeftCollar = 13;
inline constexpr int kRightCollar = 14;
inline constexpr int kHead = 15;
inline constexpr int kLeftShoulder = 16;
inline constexpr int kRightShoulder = 17;
inline constexpr int kLeftElbow = 18;
inline constexpr int kRightElbow = 19;
inline constexpr int kLeftWrist = 20;
inline constexpr int kRightWrist = 21;
} // namespace joints

/// Kinematic tree with bone offsets expressed in the parent frame.
/// The world frame is z-up; the rest pose faces +x with +y to the body's left.
struct Skeleton {
  std::vector<int> parents;
  std::vector<Vec3> offsets;

  int joint_count() const {
    return static_cast<int>(parents.size());
  }

  void validate() const {
    FUSEMOTION_CHECK(
        parents.size() == static_cast<size_t>(kNumJoints), ShapeError, "skeleton must have 22 joints");
    FUSEMOTION_CHECK(offsets.size() == parents.size(), ShapeError, "offset count differs from joint count");
    int roots = 0;
    for (int j = 0; j < joint_count(); ++j) {
      if (parents[j] < 0) {
        ++roots;
        FUSEMOTION_CHECK(j == 0, ValidationError, "root must be joint 0");
      } else {
        FUSEMOTION_CHECK(parents[j] < j, ValidationError, "parents must be topologically ordered");
      }
      FUSEMOTION_CHECK(offsets[j].allFinite(), ValidationError, "non-finite skeleton offset");
    }
    FUSEMOTION_CHECK(roots == 1, ValidationError, "skeleton needs exactly one root");
  }

  /// Neutral adult body, approximately the SMPL neutral template in meters.
  static Skeleton standard() {
    Skeleton s;
    s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    s.offsets = {
        Vec3(0.0, 0.0, 0.0),      Vec3(-0.01, 0.06, -0.09), Vec3(-0.01, -0.06, -0.09), Vec3(-0.02, 0.0, 0.11),
        Vec3(0.0, 0.04, -0.38),   Vec3(0.0, -0.04, -0.38),  Vec3(0.01, 0.0, 0.13),     Vec3(-0.04, -0.01, -0.40),
        Vec3(-0.04, 0.01, -0.40), Vec3(0.0, 0.0, 0.05),     Vec3(0.12, 0.03, -0.06),   Vec3(0.12, -0.03, -0.06),
        Vec3(-0.03, 0.0, 0.21),   Vec3(-0.01, 0.08, 0.12),  Vec3(-0.01, -0.08, 0.12),  Vec3(0.05, 0.0, 0.09),
        Vec3(-0.01, 0.12, 0.04),  Vec3(-0.01, -0.12, 0.04), Vec3(-0.02, 0.26, 0.0),    Vec3(-0.02, -0.26, 0.0),
        Vec3(0.0, 0.25, 0.01),    Vec3(0.0, -0.25, 0.01)};
    return s;
  }
};

/// Full-body motion window: root translation plus 22 local rotations in the
/// 6D representation (first two rotation-matrix columns, column-major).
struct MotionSequence {
  Eigen::MatrixX3d root_translation;
  Mat local_rotations; // N x (22 * 6)
  double fps = 30.0;

  MotionSequence() = default;

  MotionSequence(Eigen::MatrixX3d root, Mat rotations, double frame_rate)
      : root_translation(std::move(root)), local_rotations(std::move(rotations)), fps(frame_rate) {}

  int frames() const {
    return static_cast<int>(root_translation.rows());
  }

  Vec6 rotation6d(int frame, int joint) const {
    return local_rotations.block<1, 6>(frame, joint * 6).transpose();
  }

  void set_rotation6d(int frame, int joint, const Vec6& r) {
    local_rotations.block<1, 6>(frame, joint * 6) = r.transpose();
  }

  /// Flat N x 135 layout [root(3) | joint0 6D | ... | joint21 6D].
  Mat to_features() const {
    Mat out(frames(), kMotionDim);
    out.leftCols(3) = root_translation;
    out.rightCols(kNumJoints * 6) = local_rotations;
    return out;
  }

  static MotionSequence from_features(const Mat& features, double fps) {
    FUSEMOTION_CHECK(features.cols() == kMotionDim, ShapeError, "motion features must have 135 columns");
    return MotionSequence(features.leftCols(3), features.rightCols(kNumJoints * 6), fps);
  }

  void validate_shape() const {
    FUSEMOTION_CHECK(local_rotations.rows() == root_translation.rows(), ShapeError, "frame count mismatch");
    FUSEMOTION_CHECK(local_rotations.cols() == kNumJoints * 6, ShapeError, "rotations must be N x 132");
    FUSEMOTION_CHECK(frames() >= 2, LengthError, "motion needs at least 2 frames");
    FUSEMOTION_CHECK(fps > 0.0 && std::isfinite(fps), ValidationError, "fps must be positive");
    FUSEMOTION_CHECK(
        root_translation.allFinite() && local_rotations.allFinite(), ValidationError, "non-finite motion values");
  }
};

/// World joint positions, N x (22 * 3).
struct JointPositions {
  Mat positions;

  int frames() const {
    return static_cast<int>(positions.rows());
  }

  Vec3 at(int frame, int joint) const {
    return positions.block<1, 3>(frame, joint * 3).transpose();
  }
};

// ---------------------------------------------------------------------------
// Rotation algebra

/// Gram-Schmidt decoder of the 6D representation.
/// Throws DegenerateInputError for zero or parallel column vectors.
inline Mat3 rot6d_to_matrix(const Vec6& r) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  FUSEMOTION_CHECK(std::isfinite(n1) && n1 > 1e-12, DegenerateInputError, "6D rotation: zero first vector");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  FUSEMOTION_CHECK(
      std::isfinite(n2) && n2 > 1e-9 * std::max(1.0, a2.norm()),
      DegenerateInputError,
      "6D rotation: parallel or zero second vector");
  const Vec3 b2 = u2 / n2;
  Mat3 out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b1.cross(b2);
  return out;
}

inline bool is_rotation(const Mat3& m, double tol = 1e-5) {
  if (!m.allFinite()) {
    return false;
  }
  return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol && std::abs(m.determinant() - 1.0) <= tol;
}

inline Vec6 matrix_to_rot6d(const Mat3& m) {
  FUSEMOTION_CHECK(is_rotation(m), ValidationError, "matrix_to_rot6d: input is not a rotation");
  Vec6 out;
  out.head<3>() = m.col(0);
  out.tail<3>() = m.col(1);
  return out;
}

/// Vector-Jacobian product of rot6d_to_matrix: returns dL/dr given dL/dR.
inline Vec6 rot6d_vjp(const Vec6& r, const Mat3& grad_matrix) {
  const Vec3 a1 = r.head<3>();
  const Vec3 a2 = r.tail<3>();
  const double n1 = a1.norm();
  const Vec3 b1 = a1 / n1;
  const double d = b1.dot(a2);
  const Vec3 u2 = a2 - d * b1;
  const double n2 = u2.norm();
  const Vec3 b2 = u2 / n2;

  const Vec3 g1 = grad_matrix.col(0);
  const Vec3 g2 = grad_matrix.col(1);
  const Vec3 g3 = grad_matrix.col(2);

  Vec3 gb1 = g1 + b2.cross(g3);
  const Vec3 gb2 = g2 + g3.cross(b1);
  const Vec3 gu2 = (gb2 - b2 * b2.dot(gb2)) / n2;
  const Vec3 ga2 = gu2 - b1 * b1.dot(gu2);
  gb1 += -d * gu2 - b1.dot(gu2) * a2;
  const Vec3 ga1 = (gb1 - b1 * b1.dot(gb1)) / n1;

  Vec6 out;
  out.head<3>() = ga1;
  out.tail<3>() = ga2;
  return out;
}

inline Vec3 log_map(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

// ---------------------------------------------------------------------------
// Forward kinematics

/// Intermediate FK quantities kept for the backward pass.
struct FkState {
  int frames = 0;
  std::vector<Mat3> local;  // frames * 22
  std::vector<Mat3> world;  // frames * 22
  Mat positions;            // N x 66

  const Mat3& world_rotation(int frame, int joint) const {
    return world[static_cast<size_t>(frame) * kNumJoints + joint];
  }
};

/// FK over flat N x 135 motion features.
inline FkState forward_kinematics_state(const Skeleton& skeleton, const Mat& features) {
  FUSEMOTION_CHECK(skeleton.joint_count() == kNumJoints, ShapeError, "skeleton joint count must be 22");
  FUSEMOTION_CHECK(features.cols() == kMotionDim, ShapeError, "motion joint count does not match skeleton");
  FkState state;
  state.frames = static_cast<int>(features.rows());
  state.local.resize(static_cast<size_t>(state.frames) * kNumJoints);
  state.world.resize(state.local.size());
  state.positions.resize(state.frames, kNumJoints * 3);
  for (int f = 0; f < state.frames; ++f) {
    Mat3* local = &state.local[static_cast<size_t>(f) * kNumJoints];
    Mat3* world = &state.world[static_cast<size_t>(f) * kNumJoints];
    for (int j = 0; j < kNumJoints; ++j) {
      local[j] = rot6d_to_matrix(features.block<1, 6>(f, 3 + 6 * j).transpose());
    }
    world[0] = local[0];
    state.positions.block<1, 3>(f, 0) = features.block<1, 3>(f, 0);
    for (int j = 1; j < kNumJoints; ++j) {
      const int p = skeleton.parents[j];
      world[j] = world[p] * local[j];
      const Vec3 parent_pos = state.positions.block<1, 3>(f, 3 * p).transpose();
      state.positions.block<1, 3>(f, 3 * j) = (parent_pos + world[p] * skeleton.offsets[j]).transpose();
    }
  }
  return state;
}

/// Reverse-mode pass through FK. `grad_positions` is N x 66; `grad_world` is
/// optional (empty or frames*22 entries) and holds dL/dW per joint.
inline Mat forward_kinematics_backward(
    const Skeleton& skeleton,
    const Mat& features,
    const FkState& state,
    const Mat& grad_positions,
    std::span<const Mat3> grad_world = {}) {
  FUSEMOTION_CHECK(
      grad_positions.rows() == state.frames && grad_positions.cols() == kNumJoints * 3,
      ShapeError,
      "FK backward: gradient shape mismatch");
  const bool has_world = !grad_world.empty();
  Mat out = Mat::Zero(state.frames, kMotionDim);
  std::array<Mat3, kNumJoints> g_world;
  std::array<Vec3, kNumJoints> g_pos;
  for (int f = 0; f < state.frames; ++f) {
    const Mat3* local = &state.local[static_cast<size_t>(f) * kNumJoints];
    const Mat3* world = &state.world[static_cast<size_t>(f) * kNumJoints];
    for (int j = 0; j < kNumJoints; ++j) {
      g_pos[j] = grad_positions.block<1, 3>(f, 3 * j).transpose();
      g_world[j] = has_world ? grad_world[static_cast<size_t>(f) * kNumJoints + j] : Mat3::Zero();
    }
    for (int j = kNumJoints - 1; j >= 1; --j) {
      const int p = skeleton.parents[j];
      g_pos[p] += g_pos[j];
      g_world[p] += g_pos[j] * skeleton.offsets[j].transpose();
      g_world[p] += g_world[j] * local[j].transpose();
      const Mat3 g_local = world[p].transpose() * g_world[j];
      out.block<1, 6>(f, 3 + 6 * j) = rot6d_vjp(features.block<1, 6>(f, 3 + 6 * j).transpose(), g_local).transpose();
    }
    out.block<1, 3>(f, 0) = g_pos[0].transpose();
    out.block<1, 6>(f, 3) = rot6d_vjp(features.block<1, 6>(f, 3).transpose(), g_world[0]).transpose();
  }
  return out;
}

inline JointPositions forward_kinematics(const Skeleton& skeleton, const MotionSequence& motion) {
  FUSEMOTION_CHECK(
      motion.local_rotations.cols() == skeleton.joint_count() * 6, ShapeError, "motion joint count mismatch");
  return JointPositions{forward_kinematics_state(skeleton, motion.to_features()).positions};
}

// ---------------------------------------------------------------------------
// Temporal derivatives

/// Backward differences scaled by fps; the first row copies the second.
inline Mat finite_difference_velocity(const Mat& series, double fps) {
  FUSEMOTION_CHECK(series.rows() >= 2, LengthError, "finite difference needs at least 2 frames");
  const Eigen::Index n = series.rows();
  Mat v(n, series.cols());
  v.bottomRows(n - 1) = (series.bottomRows(n - 1) - series.topRows(n - 1)) * fps;
  v.row(0) = v.row(1);
  return v;
}

/// The same operator as an N x N matrix, so it can be applied as v = D * s.
inline Mat finite_difference_matrix(int frames, double fps) {
  FUSEMOTION_CHECK(frames >= 2, LengthError, "finite difference needs at least 2 frames");
  Mat d = Mat::Zero(frames, frames);
  for (int t = 1; t < frames; ++t) {
    d(t, t) = fps;
    d(t, t - 1) = -fps;
  }
  d.row(0) = d.row(1);
  return d;
}

/// Axis-angle rate (rad/s) of R_{t-1}^T R_t from a series of 6D rotations.
inline Mat angular_velocity(const Mat& rotations6d, double fps) {
  FUSEMOTION_CHECK(rotations6d.cols() == 6, ShapeError, "angular velocity expects N x 6 rotations");
  FUSEMOTION_CHECK(rotations6d.rows() >= 2, LengthError, "angular velocity needs at least 2 frames");
  const Eigen::Index n = rotations6d.rows();
  Mat out(n, 3);
  Mat3 prev = rot6d_to_matrix(rotations6d.row(0).transpose());
  for (Eigen::Index t = 1; t < n; ++t) {
    const Mat3 cur = rot6d_to_matrix(rotations6d.row(t).transpose());
    out.row(t) = (log_map(prev.transpose() * cur) * fps).transpose();
    prev = cur;
  }
  out.row(0) = out.row(1);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

/// Mean Euclidean distance between corresponding world joints, in meters.
inline double mean_joint_distance(const Mat& positions_a, const Mat& positions_b) {
  FUSEMOTION_CHECK(
      positions_a.rows() == positions_b.rows() && positions_a.cols() == positions_b.cols(),
      ShapeError,
      "joint position shape mismatch");
  const Eigen::Index joints = positions_a.cols() / 3;
  double total = 0.0;
  for (Eigen::Index f = 0; f < positions_a.rows(); ++f) {
    for (Eigen::Index j = 0; j < joints; ++j) {
      total += (positions_a.block<1, 3>(f, 3 * j) - positions_b.block<1, 3>(f, 3 * j)).norm();
    }
  }
  return total / static_cast<double>(positions_a.rows() * joints);
}

inline double geometric_loss(const MotionSequence& pred, const MotionSequence& gt, const Skeleton& skeleton) {
  FUSEMOTION_CHECK(
      pred.frames() == gt.frames() && pred.local_rotations.cols() == gt.local_rotations.cols(),
      ShapeError,
      "geometric loss: shape mismatch");
  return mean_joint_distance(
      forward_kinematics(skeleton, pred).positions, forward_kinematics(skeleton, gt).positions);
}

} // namespace fusemotion
