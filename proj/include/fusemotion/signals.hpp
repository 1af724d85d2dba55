#pragma once

#include "fusemotion/autodiff.hpp"
#include "fusemotion/kinematics.hpp"
#include "fusemotion/nn.hpp"

#include <array>

namespace fusemotion {

/// Tracked joints, in channel order.
using TrackerSet = std::array<int, 3>;
inline constexpr TrackerSet kUpperTrackers = {joints::kHead, joints::kLeftWrist, joints::kRightWrist};
inline constexpr TrackerSet kAnchorTrackers = {joints::kPelvis, joints::kLeftAnkle, joints::kRightAnkle};

/// Channel layout of the 54-wide signal matrices:
///   [0, 27)  state: per tracker world rotation 6D (6) then world position (3)
///   [27, 54) the backward-difference velocity of the 27 state channels
namespace signal_layout {
inline constexpr int kPerTracker = 9;
inline constexpr int kStateWidth = 27;
inline constexpr int rotation(int tracker) {
  return tracker * kPerTracker;
}
inline constexpr int position(int tracker) {
  return tracker * kPerTracker + 6;
}
inline constexpr int velocity(int state_channel) {
  return kStateWidth + state_channel;
}
} // namespace signal_layout

/// Head and hand observations p^{1:N}, N x 54.
struct SparseSignals {
  Mat values;

  int frames() const {
    return static_cast<int>(values.rows());
  }
};

/// Pelvis and ankle signals with the same layout, N x 54.
struct AnchorSignals {
  Mat values;

  int frames() const {
    return static_cast<int>(values.rows());
  }
};

using SignalStats = nn::NormStats;

namespace detail {

inline Mat tracker_state(const FkState& fk, const TrackerSet& trackers) {
  Mat state(fk.frames, signal_layout::kStateWidth);
  for (int f = 0; f < fk.frames; ++f) {
    for (int i = 0; i < 3; ++i) {
      const Mat3& w = fk.world_rotation(f, trackers[i]);
      state.block<1, 3>(f, signal_layout::rotation(i)) = w.col(0).transpose();
      state.block<1, 3>(f, signal_layout::rotation(i) + 3) = w.col(1).transpose();
      state.block<1, 3>(f, signal_layout::position(i)) = fk.positions.block<1, 3>(f, 3 * trackers[i]);
    }
  }
  return state;
}

inline Mat signals_from_state(const Mat& state, double fps) {
  Mat out(state.rows(), kSignalDim);
  out.leftCols(signal_layout::kStateWidth) = state;
  out.rightCols(signal_layout::kStateWidth) = finite_difference_velocity(state, fps);
  return out;
}

inline Mat extract_tracker_signals(const Skeleton& skeleton, const MotionSequence& motion, const TrackerSet& trackers) {
  motion.validate_shape();
  const FkState fk = forward_kinematics_state(skeleton, motion.to_features());
  return signals_from_state(tracker_state(fk, trackers), motion.fps);
}

} // namespace detail

inline SparseSignals extract_sparse_signals(const Skeleton& skeleton, const MotionSequence& motion) {
  return SparseSignals{detail::extract_tracker_signals(skeleton, motion, kUpperTrackers)};
}

inline AnchorSignals extract_anchor_signals(const Skeleton& skeleton, const MotionSequence& motion) {
  return AnchorSignals{detail::extract_tracker_signals(skeleton, motion, kAnchorTrackers)};
}

/// Differentiable tracker signals of N x 135 motion features on a tape.
inline ad::Var tracker_signals(
    ad::Tape& tape,
    const ad::Var& features,
    const Skeleton& skeleton,
    double fps,
    const TrackerSet& trackers = kAnchorTrackers) {
  const Mat x = features.value();
  auto fk = std::make_shared<FkState>(forward_kinematics_state(skeleton, x));
  const Mat state_value = detail::tracker_state(*fk, trackers);
  const ad::Var state = tape.record(state_value, {features}, [features, fk, x, skeleton, trackers](ad::Tape& t, const Mat& g) {
    Mat g_pos = Mat::Zero(fk->frames, kNumJoints * 3);
    std::vector<Mat3> g_world(static_cast<size_t>(fk->frames) * kNumJoints, Mat3::Zero());
    for (int f = 0; f < fk->frames; ++f) {
      for (int i = 0; i < 3; ++i) {
        Mat3& gw = g_world[static_cast<size_t>(f) * kNumJoints + trackers[i]];
        gw.col(0) += g.block<1, 3>(f, signal_layout::rotation(i)).transpose();
        gw.col(1) += g.block<1, 3>(f, signal_layout::rotation(i) + 3).transpose();
        g_pos.block<1, 3>(f, 3 * trackers[i]) += g.block<1, 3>(f, signal_layout::position(i));
      }
    }
    t.accumulate(features, forward_kinematics_backward(skeleton, x, *fk, g_pos, g_world));
  });
  const ad::Var diff = tape.constant(finite_difference_matrix(static_cast<int>(x.rows()), fps));
  return ad::concat_cols({state, ad::matmul(diff, state)});
}

/// World joint positions (N x 66) of motion features on a tape.
inline ad::Var joint_positions(ad::Tape& tape, const ad::Var& features, const Skeleton& skeleton) {
  const Mat x = features.value();
  auto fk = std::make_shared<FkState>(forward_kinematics_state(skeleton, x));
  return tape.record(fk->positions, {features}, [features, fk, x, skeleton](ad::Tape& t, const Mat& g) {
    t.accumulate(features, forward_kinematics_backward(skeleton, x, *fk, g));
  });
}

/// Mean per-joint Euclidean distance between FK(features) and target positions.
inline ad::Var geometric_loss(
    ad::Tape& tape, const ad::Var& features, const Mat& target_positions, const Skeleton& skeleton) {
  const Mat x = features.value();
  auto fk = std::make_shared<FkState>(forward_kinematics_state(skeleton, x));
  FUSEMOTION_CHECK(
      target_positions.rows() == fk->positions.rows() && target_positions.cols() == fk->positions.cols(),
      ShapeError, "geometric loss: target shape mismatch");
  const double count = static_cast<double>(fk->frames) * kNumJoints;
  Mat unit = Mat::Zero(fk->frames, kNumJoints * 3);
  double total = 0.0;
  for (int f = 0; f < fk->frames; ++f) {
    for (int j = 0; j < kNumJoints; ++j) {
      const Eigen::RowVector3d d = fk->positions.block<1, 3>(f, 3 * j) - target_positions.block<1, 3>(f, 3 * j);
      const double n = d.norm();
      total += n;
      if (n > 0.0) {
        unit.block<1, 3>(f, 3 * j) = d / n;
      }
    }
  }
  Mat value(1, 1);
  value(0, 0) = total / count;
  return tape.record(value, {features}, [features, fk, x, skeleton, unit, count](ad::Tape& t, const Mat& g) {
    t.accumulate(features, forward_kinematics_backward(skeleton, x, *fk, unit * (g(0, 0) / count)));
  });
}

inline SparseSignals normalize(const SparseSignals& s, const SignalStats& stats) {
  FUSEMOTION_CHECK(s.values.cols() == kSignalDim, ShapeError, "signals must be 54 wide");
  return SparseSignals{stats.normalize(s.values)};
}

inline SparseSignals denormalize(const SparseSignals& s, const SignalStats& stats) {
  FUSEMOTION_CHECK(s.values.cols() == kSignalDim, ShapeError, "signals must be 54 wide");
  return SparseSignals{stats.denormalize(s.values)};
}

/// Per-channel mean/std over a corpus of signal windows (std floored at 1e-6).
inline SignalStats fit_signal_stats(const std::vector<SparseSignals>& corpus) {
  std::vector<const Mat*> ptrs;
  ptrs.reserve(corpus.size());
  for (const auto& s : corpus) {
    ptrs.push_back(&s.values);
  }
  return SignalStats::fit(ptrs, 1e-6);
}

} // namespace fusemotion
