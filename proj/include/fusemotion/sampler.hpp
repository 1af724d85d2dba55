#pragma once

#include "fusemotion/diffusion.hpp"
#include "fusemotion/guidance.hpp"
#include "fusemotion/motion_prior.hpp"
#include "fusemotion/pae.hpp"
#include "fusemotion/scene.hpp"

#include <functional>

namespace fusemotion {

struct CropOptions {
  double half_extent_m = 1.0;
  double center_drop_m = 0.9; // crop center sits this far below the head
};

/// World-frame head position at a frame of the observed signals.
inline Vec3 head_position(const SparseSignals& s, int frame = 0) {
  return s.values.block<1, 3>(frame, signal_layout::position(0)).transpose();
}

inline Vec3 crop_center(const SparseSignals& s, const CropOptions& opt) {
  return head_position(s) - Vec3(0.0, 0.0, opt.center_drop_m);
}

/// Horizontal offset removed before inference: the first-frame head xy.
inline Vec3 canonical_offset(const SparseSignals& s) {
  const Vec3 h = head_position(s);
  return Vec3(h.x(), h.y(), 0.0);
}

/// Subtracts `offset` from the three tracker positions (velocities are unaffected).
inline SparseSignals shift_signals(const SparseSignals& s, const Vec3& offset) {
  SparseSignals out = s;
  for (int i = 0; i < 3; ++i) {
    out.values.middleCols(signal_layout::position(i), 3).rowwise() -= offset.transpose();
  }
  return out;
}

inline ScenePointCloud shift_cloud(const ScenePointCloud& c, const Vec3& offset) {
  return ScenePointCloud{c.points.rowwise() - offset.transpose()};
}

inline MotionSequence shift_motion(const MotionSequence& m, const Vec3& offset) {
  MotionSequence out = m;
  out.root_translation.rowwise() -= offset.transpose();
  return out;
}

struct AssembledCondition {
  ConditionBundle bundle;
  ScenePointCloud cropped;
  Vec3 center = Vec3::Zero();
  bool used_sentinel = false;
};

/// c = (p, f, E_S): f from the upper PAE, E_S from the crop around the head.
inline AssembledCondition assemble_condition(
    const SparseSignals& signals, const ScenePointCloud& cloud, const PeriodicAutoencoder& upper_pae,
    const Denoiser& denoiser, const CropOptions& crop = {}) {
  FUSEMOTION_CHECK(signals.values.cols() == kSignalDim, ShapeError, "assemble_condition: signals must be 54 wide");
  AssembledCondition out;
  out.bundle.signals = signals;
  const PeriodicParams params = analyze_signals(upper_pae, signals.values);
  out.bundle.periodic = reconstruct_periodic_feature(params, signals.frames(), upper_pae.config().fps);
  out.center = crop_center(signals, crop);
  auto cropped = crop_bounding_box(cloud, out.center, crop.half_extent_m);
  out.cropped = std::move(cropped.cloud);
  out.used_sentinel = cropped.used_sentinel;
  if (denoiser.config().use_scene) {
    out.bundle.scene = encode_scene(denoiser.scene_encoder(), out.cropped, out.center);
  } else {
    out.bundle.scene.vector = RowVec::Zero(denoiser.config().scene.feature_width);
  }
  return out;
}

struct SamplingTrace {
  int denoiser_calls = 0;
  int guidance_evaluations = 0;
};

using DenoiseFn = std::function<Mat(const Mat& x_t, int t)>;
using GuidanceGradFn = std::function<Mat(const Mat& x0)>;

/// Reverse chain from x_T: for t = T..1, x0 = G(x_t); x0 -= eta grad; x_{t-1} = step(x0).
/// An empty `guidance` skips the correction.
inline Mat reverse_diffusion(
    const Mat& x_T, const DiffusionSchedule& s, const DenoiseFn& denoise_fn, const GuidanceGradFn& guidance, double eta,
    Rng& rng, SamplingTrace* trace = nullptr) {
  Mat x = x_T;
  for (int t = s.steps; t >= 1; --t) {
    Mat x0 = denoise_fn(x, t);
    if (trace != nullptr) {
      ++trace->denoiser_calls;
    }
    if (guidance) {
      const Mat g = guidance(x0);
      if (trace != nullptr) {
        ++trace->guidance_evaluations;
      }
      x0 = guided_correction(x0, g, eta);
    }
    x = ddpm_step(s, x0, t, rng);
  }
  return x;
}

/// Trained components used at inference.
struct SamplerModels {
  const MotionPrior* prior = nullptr;
  const Denoiser* denoiser = nullptr;
  const PeriodicAutoencoder* upper_pae = nullptr;
  const PeriodicAutoencoder* anchor_pae = nullptr;
  Skeleton skeleton = Skeleton::standard();
  DiffusionSchedule schedule;
};

struct SamplerOptions {
  GuidanceConfig guidance;
  bool guided = true;
  bool use_prior = true;   // false: x_T ~ N(0, I)
  bool noise_prior = false; // q_sample the prior draw to level T
  CropOptions crop;
};

/// Guided sampling of one window, world coordinates in and out.
inline MotionSequence estimate_motion(
    const SparseSignals& signals, const ScenePointCloud& cloud, const SamplerModels& m, const SamplerOptions& opt,
    std::uint64_t seed, SamplingTrace* trace = nullptr) {
  FUSEMOTION_CHECK(m.denoiser != nullptr && m.upper_pae != nullptr, ValidationError, "estimate_motion: missing model");
  const int n = m.denoiser->config().window;
  FUSEMOTION_CHECK(signals.frames() == n, LengthError, "estimate_motion: signal window length mismatch");
  FUSEMOTION_CHECK(cloud.size() > 0, ValidationError, "estimate_motion: empty scene cloud");
  opt.guidance.validate();
  const double fps = m.denoiser->config().fps;

  const Vec3 offset = canonical_offset(signals);
  const SparseSignals local = shift_signals(signals, offset);
  const AssembledCondition cond = assemble_condition(local, shift_cloud(cloud, offset), *m.upper_pae, *m.denoiser, opt.crop);

  Rng rng(seed);
  Mat x_T;
  if (opt.use_prior) {
    FUSEMOTION_CHECK(m.prior != nullptr, ValidationError, "estimate_motion: prior requested but missing");
    x_T = sample_initial_motion(*m.prior, local, rng).to_features();
    if (opt.noise_prior) {
      x_T = q_sample(m.schedule, x_T, m.schedule.steps, rng.normal(x_T.rows(), x_T.cols()));
    }
  } else {
    x_T = rng.normal(n, kMotionDim);
  }

  const DenoiseFn denoise_fn = [&](const Mat& x_t, int t) { return denoise(*m.denoiser, m.schedule, x_t, t, cond.bundle); };
  GuidanceGradFn guidance;
  GuidanceContext ctx;
  if (opt.guided) {
    ctx.skeleton = &m.skeleton;
    ctx.fps = fps;
    if (opt.guidance.alpha > 0.0) {
      ctx.tree = std::make_shared<const KdTree>(cond.cropped.points);
    }
    if (opt.guidance.beta > 0.0) {
      FUSEMOTION_CHECK(m.anchor_pae != nullptr, ValidationError, "estimate_motion: phase guidance needs an anchor PAE");
      ctx.anchor_pae = m.anchor_pae;
      ctx.p_upper = upper_phase_feature(*m.upper_pae, local);
    }
    guidance = [&](const Mat& x0) { return sample_loss_and_gradient(x0, ctx, opt.guidance).gradient; };
  }
  const Mat x0 = reverse_diffusion(x_T, m.schedule, denoise_fn, guidance, opt.guidance.eta, rng, trace);
  return shift_motion(MotionSequence::from_features(x0, fps), -offset);
}

/// Window starts for a length-M sequence: stride N/2, last window flush with the end.
inline std::vector<int> window_starts(int total, int window) {
  FUSEMOTION_CHECK(total >= window, LengthError, "sequence shorter than one window");
  std::vector<int> starts;
  const int stride = std::max(1, window / 2);
  for (int s = 0; s + window < total; s += stride) {
    starts.push_back(s);
  }
  starts.push_back(total - window);
  return starts;
}

/// Tent weights per window (M x windows), normalized so each frame sums to 1.
inline Mat blend_weights(int total, int window) {
  const auto starts = window_starts(total, window);
  Mat w = Mat::Zero(total, static_cast<Eigen::Index>(starts.size()));
  for (size_t k = 0; k < starts.size(); ++k) {
    for (int i = 0; i < window; ++i) {
      w(starts[k] + i, static_cast<Eigen::Index>(k)) = std::min(i + 1, window - i);
    }
  }
  for (int f = 0; f < total; ++f) {
    w.row(f) /= w.row(f).sum();
  }
  return w;
}

/// Cross-fades overlapping windows: weighted mean on root translation and
/// incremental slerp on rotations. Frames covered once are copied verbatim.
inline MotionSequence blend_windows(const std::vector<MotionSequence>& windows, const std::vector<int>& starts, int total) {
  FUSEMOTION_CHECK(!windows.empty() && windows.size() == starts.size(), ShapeError, "blend: window/start mismatch");
  const int n = windows.front().frames();
  const Mat weights = blend_weights(total, n);
  MotionSequence out;
  out.fps = windows.front().fps;
  out.root_translation = Eigen::MatrixX3d::Zero(total, 3);
  out.local_rotations = Mat::Zero(total, kNumJoints * 6);
  for (int f = 0; f < total; ++f) {
    double acc = 0.0;
    std::vector<Eigen::Quaterniond> q(kNumJoints);
    for (size_t k = 0; k < windows.size(); ++k) {
      const double w = weights(f, static_cast<Eigen::Index>(k));
      if (w <= 0.0) {
        continue;
      }
      const int local = f - starts[k];
      const MotionSequence& m = windows[k];
      out.root_translation.row(f) += w * m.root_translation.row(local);
      if (acc == 0.0) {
        out.local_rotations.row(f) = m.local_rotations.row(local);
        for (int j = 0; j < kNumJoints; ++j) {
          q[j] = Eigen::Quaterniond(rot6d_to_matrix(m.rotation6d(local, j)));
        }
      } else {
        for (int j = 0; j < kNumJoints; ++j) {
          const Eigen::Quaterniond qn(rot6d_to_matrix(m.rotation6d(local, j)));
          q[j] = q[j].slerp(w / (acc + w), qn);
          out.set_rotation6d(f, j, matrix_to_rot6d(q[j].normalized().toRotationMatrix()));
        }
      }
      acc += w;
    }
  }
  return out;
}

/// Sliding-window estimation over M >= N frames; window k uses a seed derived from (seed, k).
inline MotionSequence estimate_long_sequence(
    const SparseSignals& signals, const ScenePointCloud& cloud, const SamplerModels& m, const SamplerOptions& opt,
    std::uint64_t seed) {
  const int n = m.denoiser->config().window;
  const int total = signals.frames();
  FUSEMOTION_CHECK(total >= n, LengthError, "estimate_long_sequence: sequence shorter than one window");
  if (total == n) {
    return estimate_motion(signals, cloud, m, opt, seed);
  }
  const auto starts = window_starts(total, n);
  std::vector<MotionSequence> windows;
  for (size_t k = 0; k < starts.size(); ++k) {
    const SparseSignals part{signals.values.middleRows(starts[k], n)};
    windows.push_back(estimate_motion(part, cloud, m, opt, derive_seed(seed, k)));
  }
  return blend_windows(windows, starts, total);
}

} // namespace fusemotion
