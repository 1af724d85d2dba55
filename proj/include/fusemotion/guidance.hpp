#pragma once

#include "fusemotion/kinematics.hpp"
#include "fusemotion/pae.hpp"
#include "fusemotion/scene.hpp"
#include "fusemotion/signals.hpp"

#include <memory>

namespace fusemotion {

struct GuidanceConfig {
  double alpha = 0.1;  // penetration weight
  double beta = 0.01;  // phase weight
  double eta = 1.0;    // step size
  double radius = 0.02;
  int k = 4;
  std::vector<int> contact_joints{joints::kLeftAnkle, joints::kRightAnkle, joints::kLeftKnee, joints::kRightKnee};

  void validate() const {
    FUSEMOTION_CHECK(alpha >= 0.0 && beta >= 0.0 && eta >= 0.0, ValidationError, "guidance weights must be >= 0");
    FUSEMOTION_CHECK(radius > 0.0, ValidationError, "guidance radius must be > 0");
    FUSEMOTION_CHECK(k >= 1, ValidationError, "guidance k must be >= 1");
    FUSEMOTION_CHECK(!contact_joints.empty(), ValidationError, "contact joint set is empty");
    for (int j : contact_joints) {
      FUSEMOTION_CHECK(j >= 0 && j < kNumJoints, ValidationError, "contact joint index out of range");
    }
  }
};

struct LossAndGradient {
  double value = 0.0;
  Mat gradient; // N x 135
};

/// Sum over frames, contact joints and k nearest points of max(r - |x - b|, 0).
/// Neighbor sets are held fixed for the gradient.
inline LossAndGradient penetration_loss_and_gradient(
    const Mat& features, const Skeleton& skeleton, const KdTree& tree, const GuidanceConfig& cfg, bool want_grad = true) {
  const FkState fk = forward_kinematics_state(skeleton, features);
  LossAndGradient out;
  Mat g_pos = Mat::Zero(fk.frames, kNumJoints * 3);
  bool any = false;
  for (int f = 0; f < fk.frames; ++f) {
    for (int j : cfg.contact_joints) {
      const Vec3 x = fk.positions.block<1, 3>(f, 3 * j).transpose();
      for (const Neighbor& nb : tree.knn(x, cfg.k)) {
        if (nb.distance >= cfg.radius) {
          continue;
        }
        out.value += cfg.radius - nb.distance;
        if (nb.distance > 0.0) {
          const Vec3 b = tree.points().row(nb.index).transpose();
          g_pos.block<1, 3>(f, 3 * j) -= ((x - b) / nb.distance).transpose();
          any = true;
        }
      }
    }
  }
  if (want_grad) {
    out.gradient = any ? forward_kinematics_backward(skeleton, features, fk, g_pos) : Mat::Zero(features.rows(), features.cols());
  }
  return out;
}

inline double penetration_loss(const MotionSequence& x0, const Skeleton& skeleton, const KdTree& tree, const GuidanceConfig& cfg) {
  return penetration_loss_and_gradient(x0.to_features(), skeleton, tree, cfg, false).value;
}

inline double penetration_loss(
    const MotionSequence& x0, const Skeleton& skeleton, const ScenePointCloud& cloud, const GuidanceConfig& cfg) {
  FUSEMOTION_CHECK(cloud.size() > 0, ValidationError, "penetration loss: empty cloud");
  return penetration_loss(x0, skeleton, KdTree(cloud.points), cfg);
}

/// Upper-body phase feature of the observed signals.
inline RowVec upper_phase_feature(const PeriodicAutoencoder& upper_pae, const SparseSignals& upper) {
  ad::Tape tape;
  return upper_pae.forward_raw(tape, tape.constant(upper.values)).phase_feature.value();
}

/// |P_upper - P_lower| where P_lower comes from the anchor PAE applied to the
/// pelvis/ankle signals of x0.
inline LossAndGradient phase_matching_loss_and_gradient(
    const Mat& features, const PeriodicAutoencoder& anchor_pae, const Skeleton& skeleton, const RowVec& p_upper,
    double fps, bool want_grad = true) {
  FUSEMOTION_CHECK(features.cols() == kMotionDim, ShapeError, "phase loss: features must be N x 135");
  FUSEMOTION_CHECK(
      p_upper.size() == 3 * anchor_pae.config().latent, ShapeError, "phase loss: upper phase feature width mismatch");
  ad::Tape tape;
  const ad::Var x = tape.variable(features);
  const ad::Var anchors = tracker_signals(tape, x, skeleton, fps, kAnchorTrackers);
  const ad::Var p_lower = anchor_pae.forward_raw(tape, anchors).phase_feature;
  const ad::Var loss = ad::norm(ad::sub(tape.constant(p_upper), p_lower));
  LossAndGradient out;
  out.value = loss.scalar();
  if (want_grad) {
    tape.backward(loss);
    out.gradient = tape.grad(x);
  }
  return out;
}

inline double phase_matching_loss(
    const MotionSequence& x0, const PeriodicAutoencoder& upper_pae, const PeriodicAutoencoder& anchor_pae,
    const Skeleton& skeleton, const SparseSignals& upper) {
  return phase_matching_loss_and_gradient(
             x0.to_features(), anchor_pae, skeleton, upper_phase_feature(upper_pae, upper), x0.fps, false)
      .value;
}

/// Fixed inputs the sampling loss needs for one window.
struct GuidanceContext {
  const Skeleton* skeleton = nullptr;
  std::shared_ptr<const KdTree> tree;          // cropped scene
  const PeriodicAutoencoder* anchor_pae = nullptr;
  RowVec p_upper;                              // from the upper PAE on observed signals
  double fps = 30.0;
};

/// l = alpha l_pen + beta l_phase; a term with zero weight is skipped entirely.
inline LossAndGradient sample_loss_and_gradient(
    const Mat& features, const GuidanceContext& ctx, const GuidanceConfig& cfg, bool want_grad = true) {
  LossAndGradient out;
  out.gradient = Mat::Zero(features.rows(), features.cols());
  if (cfg.alpha > 0.0) {
    FUSEMOTION_CHECK(ctx.tree != nullptr && ctx.skeleton != nullptr, ValidationError, "sample loss: no scene");
    const auto pen = penetration_loss_and_gradient(features, *ctx.skeleton, *ctx.tree, cfg, want_grad);
    out.value += cfg.alpha * pen.value;
    if (want_grad) {
      out.gradient += cfg.alpha * pen.gradient;
    }
  }
  if (cfg.beta > 0.0) {
    FUSEMOTION_CHECK(ctx.anchor_pae != nullptr && ctx.skeleton != nullptr, ValidationError, "sample loss: no anchor PAE");
    const auto ph = phase_matching_loss_and_gradient(features, *ctx.anchor_pae, *ctx.skeleton, ctx.p_upper, ctx.fps, want_grad);
    out.value += cfg.beta * ph.value;
    if (want_grad) {
      out.gradient += cfg.beta * ph.gradient;
    }
  }
  return out;
}

inline double sample_loss(const MotionSequence& x0, const GuidanceContext& ctx, const GuidanceConfig& cfg) {
  return sample_loss_and_gradient(x0.to_features(), ctx, cfg, false).value;
}

/// x0 - eta * grad.
inline Mat guided_correction(const Mat& x0, const Mat& grad, double eta) {
  FUSEMOTION_CHECK(grad.rows() == x0.rows() && grad.cols() == x0.cols(), ShapeError, "guided correction: shape mismatch");
  if (eta == 0.0) {
    return x0;
  }
  return x0 - eta * grad;
}

} // namespace fusemotion
