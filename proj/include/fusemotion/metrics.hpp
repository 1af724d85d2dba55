#pragma once

#include "fusemotion/kinematics.hpp"

#include <string>
#include <vector>

namespace fusemotion {

enum class RotationError { kGeodesic, kEulerSum };

namespace metrics_detail {

inline void check_pair(const MotionSequence& a, const MotionSequence& b) {
  FUSEMOTION_CHECK(
      a.frames() == b.frames() && a.local_rotations.cols() == b.local_rotations.cols() &&
          a.root_translation.cols() == b.root_translation.cols(),
      ShapeError, "metric inputs differ in shape");
}

inline double geodesic_angle(const Mat3& r) {
  const double c = 0.5 * (r.trace() - 1.0);
  const Vec3 v(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * v.norm(), c);
}

/// |yaw| + |pitch| + |roll| of a ZYX decomposition.
inline double euler_sum(const Mat3& r) {
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  return std::abs(yaw) + std::abs(pitch) + std::abs(roll);
}

inline double mean_distance(const Mat& a, const Mat& b, const std::vector<int>& joints) {
  double total = 0.0;
  for (Eigen::Index f = 0; f < a.rows(); ++f) {
    for (int j : joints) {
      total += (a.block<1, 3>(f, 3 * j) - b.block<1, 3>(f, 3 * j)).norm();
    }
  }
  return total / static_cast<double>(a.rows() * static_cast<Eigen::Index>(joints.size()));
}

inline std::vector<int> all_joints() {
  std::vector<int> j(kNumJoints);
  for (int i = 0; i < kNumJoints; ++i) {
    j[static_cast<size_t>(i)] = i;
  }
  return j;
}

} // namespace metrics_detail

/// Mean per-joint rotation error between local rotations, degrees.
inline double mpjre(const MotionSequence& pred, const MotionSequence& gt, RotationError mode = RotationError::kGeodesic) {
  metrics_detail::check_pair(pred, gt);
  double total = 0.0;
  for (int f = 0; f < pred.frames(); ++f) {
    for (int j = 0; j < kNumJoints; ++j) {
      const Mat3 rel = rot6d_to_matrix(pred.rotation6d(f, j)).transpose() * rot6d_to_matrix(gt.rotation6d(f, j));
      total += mode == RotationError::kGeodesic ? metrics_detail::geodesic_angle(rel) : metrics_detail::euler_sum(rel);
    }
  }
  return total / (pred.frames() * kNumJoints) * 180.0 / kPi;
}

/// Mean per-joint position error, millimeters.
inline double mpjpe(const MotionSequence& pred, const MotionSequence& gt, const Skeleton& skeleton) {
  metrics_detail::check_pair(pred, gt);
  return 1000.0 * mean_joint_distance(forward_kinematics(skeleton, pred).positions, forward_kinematics(skeleton, gt).positions);
}

/// Mean per-joint velocity error, mm/s.
inline double mpjve(const MotionSequence& pred, const MotionSequence& gt, const Skeleton& skeleton, double fps) {
  metrics_detail::check_pair(pred, gt);
  const Mat vp = finite_difference_velocity(forward_kinematics(skeleton, pred).positions, fps);
  const Mat vg = finite_difference_velocity(forward_kinematics(skeleton, gt).positions, fps);
  return 1000.0 * mean_joint_distance(vp, vg);
}

/// Mean jerk magnitude (third backward difference times fps^3) in units of 10^2 m/s^3.
inline double jitter(const MotionSequence& motion, const Skeleton& skeleton, double fps) {
  FUSEMOTION_CHECK(motion.frames() >= 4, LengthError, "jitter needs at least 4 frames");
  const Mat p = forward_kinematics(skeleton, motion).positions;
  const double fps3 = fps * fps * fps;
  double total = 0.0;
  for (Eigen::Index t = 3; t < p.rows(); ++t) {
    const Mat jerk = ((p.row(t) - p.row(t - 3)) - 3.0 * (p.row(t - 1) - p.row(t - 2))) * fps3;
    for (int j = 0; j < kNumJoints; ++j) {
      total += jerk.block<1, 3>(0, 3 * j).norm();
    }
  }
  return total / static_cast<double>((p.rows() - 3) * kNumJoints) * 1e-2;
}

struct FootContactOptions {
  double floor_height = 0.0;
  double contact_height = 0.05; // above the floor, meters
  double contact_speed = 0.3;   // m/s
};

/// Mean horizontal foot displacement (cm/frame) over frames where that foot
/// is below the contact height and slower than the contact speed.
inline double foot_skate(
    const MotionSequence& motion, const Skeleton& skeleton, double fps, const FootContactOptions& opt = {}) {
  FUSEMOTION_CHECK(motion.frames() >= 2, LengthError, "foot skate needs at least 2 frames");
  const Mat p = forward_kinematics(skeleton, motion).positions;
  double total = 0.0;
  int count = 0;
  for (int foot : {joints::kLeftFoot, joints::kRightFoot}) {
    for (Eigen::Index t = 1; t < p.rows(); ++t) {
      const Eigen::RowVector3d cur = p.block<1, 3>(t, 3 * foot);
      const Eigen::RowVector3d prev = p.block<1, 3>(t - 1, 3 * foot);
      const double height = cur.z() - opt.floor_height;
      const double speed = (cur - prev).norm() * fps;
      if (height < opt.contact_height && speed < opt.contact_speed) {
        total += (cur - prev).head<2>().norm();
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : 100.0 * total / count;
}

enum class BodyPart { kHands, kUpper, kLower };

inline std::vector<int> body_part_joints(BodyPart part) {
  using namespace joints;
  switch (part) {
    case BodyPart::kHands:
      return {kLeftWrist, kRightWrist};
    case BodyPart::kUpper:
      return {kSpine1, kSpine2, kSpine3, kNeck, kLeftCollar, kRightCollar, kHead,
              kLeftShoulder, kRightShoulder, kLeftElbow, kRightElbow, kLeftWrist, kRightWrist};
    case BodyPart::kLower:
      return {kPelvis, kLeftHip, kRightHip, kLeftKnee, kRightKnee, kLeftAnkle, kRightAnkle, kLeftFoot, kRightFoot};
  }
  return {};
}

/// MPJPE (mm) restricted to a joint subset.
inline double per_part_pe(const MotionSequence& pred, const MotionSequence& gt, const Skeleton& skeleton, BodyPart part) {
  metrics_detail::check_pair(pred, gt);
  return 1000.0 * metrics_detail::mean_distance(
                      forward_kinematics(skeleton, pred).positions, forward_kinematics(skeleton, gt).positions,
                      body_part_joints(part));
}

struct MetricRow {
  double mpjre = 0.0;
  double mpjpe = 0.0;
  double mpjve = 0.0;
  double jitter = 0.0;
  double foot_skate = 0.0;
  double hand_pe = 0.0;
  double upper_pe = 0.0;
  double lower_pe = 0.0;
};

inline MetricRow evaluate_all(
    const MotionSequence& pred, const MotionSequence& gt, const Skeleton& skeleton, double fps,
    const FootContactOptions& contact = {}) {
  MetricRow r;
  r.mpjre = mpjre(pred, gt);
  r.mpjpe = mpjpe(pred, gt, skeleton);
  r.mpjve = mpjve(pred, gt, skeleton, fps);
  r.jitter = jitter(pred, skeleton, fps);
  r.foot_skate = foot_skate(pred, skeleton, fps, contact);
  r.hand_pe = per_part_pe(pred, gt, skeleton, BodyPart::kHands);
  r.upper_pe = per_part_pe(pred, gt, skeleton, BodyPart::kUpper);
  r.lower_pe = per_part_pe(pred, gt, skeleton, BodyPart::kLower);
  return r;
}

} // namespace fusemotion
