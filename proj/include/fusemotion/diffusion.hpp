#pragma once

#include "fusemotion/autodiff.hpp"
#include "fusemotion/kinematics.hpp"
#include "fusemotion/motion_prior.hpp"
#include "fusemotion/nn.hpp"
#include "fusemotion/pae.hpp"
#include "fusemotion/scene.hpp"
#include "fusemotion/signals.hpp"

namespace fusemotion {

struct DiffusionSchedule {
  int steps = 0;
  Vec beta;      // beta[i - 1] is beta_i, i = 1..T
  Vec alpha_bar; // alpha_bar[t], t = 0..T

  double sqrt_alpha_bar(int t) const {
    return std::sqrt(alpha_bar(t));
  }
};

/// Linear beta ramp from beta_start to beta_end over T steps.
inline DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  FUSEMOTION_CHECK(steps >= 1, RangeError, "schedule needs T >= 1");
  FUSEMOTION_CHECK(
      beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, RangeError,
      "schedule needs 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps + 1);
  s.alpha_bar(0) = 1.0;
  for (int i = 1; i <= steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i - 1) / (steps - 1);
    s.beta(i - 1) = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bar(i) = s.alpha_bar(i - 1) * (1.0 - s.beta(i - 1));
  }
  return s;
}

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise; t = 0 returns x0.
inline Mat q_sample(const DiffusionSchedule& s, const Mat& x0, int t, const Mat& noise) {
  FUSEMOTION_CHECK(t >= 0 && t <= s.steps, RangeError, "q_sample: t out of range");
  FUSEMOTION_CHECK(noise.rows() == x0.rows() && noise.cols() == x0.cols(), ShapeError, "q_sample: noise shape");
  if (t == 0) {
    return x0;
  }
  return std::sqrt(s.alpha_bar(t)) * x0 + std::sqrt(1.0 - s.alpha_bar(t)) * noise;
}

inline MotionSequence q_sample(const DiffusionSchedule& s, const MotionSequence& x0, int t, const Mat& noise) {
  return MotionSequence::from_features(q_sample(s, x0.to_features(), t, noise), x0.fps);
}

/// x_{t-1} = sqrt(abar_{t-1}) x0 + sqrt(1 - abar_{t-1}) eps. At t = 1 this is x0 exactly.
inline Mat ddpm_step(const DiffusionSchedule& s, const Mat& x0, int t, Rng& rng) {
  FUSEMOTION_CHECK(t >= 1 && t <= s.steps, RangeError, "ddpm_step: t out of range");
  if (t == 1) {
    return x0;
  }
  const Mat eps = rng.normal(x0.rows(), x0.cols());
  return std::sqrt(s.alpha_bar(t - 1)) * x0 + std::sqrt(1.0 - s.alpha_bar(t - 1)) * eps;
}

/// c = (p, f, E_S) for one window, all in raw units.
struct ConditionBundle {
  SparseSignals signals;
  PeriodicFeatureCurve periodic;
  SceneFeature scene;
};

struct DenoiserConfig {
  int window = 120;
  int d_model = 256;
  int layers = 8;
  int heads = 4;
  int ff = 512;
  int periodic_channels = 6;
  double fps = 30.0;
  bool use_scene = true;
  bool use_periodic = true;
  SceneEncoder::Config scene;
};

/// x0-predicting transformer G(x_t, t, c). Owns the scene encoder so both are
/// trained together.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& config, Rng& rng) : config_(config) {
    const int d = config.d_model;
    const int in = kMotionDim + kSignalDim + (config.use_periodic ? config.periodic_channels : 0);
    input_ = nn::Linear(params_, "g.input", in, d, rng);
    pos_ = &params_.add("g.pos", 0.02 * rng.normal(config.window, d));
    time1_ = nn::Linear(params_, "g.time1", d, d, rng);
    time2_ = nn::Linear(params_, "g.time2", d, d, rng);
    if (config.use_scene) {
      scene_encoder_ = SceneEncoder(params_, "g.scene_encoder", config.scene, rng);
      scene_proj_ = nn::Linear(params_, "g.scene", config.scene.feature_width, d, rng);
    }
    for (int i = 0; i < config.layers; ++i) {
      layers_.emplace_back(params_, "g.layer" + std::to_string(i), d, config.heads, config.ff, rng);
    }
    norm_ = nn::LayerNorm(params_, "g.norm", d);
    output_ = nn::Linear(params_, "g.output", d, kMotionDim, rng);
    motion_stats = nn::NormStats::identity(kMotionDim);
    signal_stats = nn::NormStats::identity(kSignalDim);
  }

  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;
  Denoiser& operator=(Denoiser&&) = default;

  nn::NormStats motion_stats;
  nn::NormStats signal_stats;

  const DenoiserConfig& config() const {
    return config_;
  }
  nn::ParameterSet& parameters() {
    return params_;
  }
  const nn::ParameterSet& parameters() const {
    return params_;
  }
  const SceneEncoder& scene_encoder() const {
    return scene_encoder_;
  }

  /// Predicted clean features (raw units). `scene` is 1 x 256 and ignored
  /// unless use_scene; `periodic` is ignored unless use_periodic.
  ad::Var forward(
      ad::Tape& tape, const ad::Var& x_t, int t, double alpha_bar, const ad::Var& signals, const ad::Var& periodic,
      const ad::Var& scene) const {
    const Eigen::Index n = x_t.rows();
    FUSEMOTION_CHECK(n == config_.window && x_t.cols() == kMotionDim, ShapeError, "denoiser: x_t must be window x 135");
    FUSEMOTION_CHECK(signals.rows() == n && signals.cols() == kSignalDim, ShapeError, "denoiser: signal shape mismatch");
    // Standardize x_t by its marginal statistics at this noise level.
    const RowVec mean = std::sqrt(alpha_bar) * motion_stats.mean;
    const RowVec std = (alpha_bar * motion_stats.std.array().square() + (1.0 - alpha_bar)).sqrt().matrix();
    const ad::Var x_in =
        ad::mul_row(ad::add_row(x_t, tape.constant(-mean)), tape.constant(std.cwiseInverse()));
    std::vector<ad::Var> parts{x_in, signal_stats.normalize(tape, signals)};
    if (config_.use_periodic) {
      FUSEMOTION_CHECK(
          periodic.rows() == n && periodic.cols() == config_.periodic_channels, ShapeError,
          "denoiser: periodic feature shape mismatch");
      parts.push_back(periodic);
    }
    const ad::Var frames = ad::add(input_(tape, ad::concat_cols(parts)), tape.parameter(*pos_));
    const ad::Var temb = tape.constant(nn::sinusoidal_embedding(t, config_.d_model));
    std::vector<ad::Var> tokens{time2_(tape, ad::gelu(time1_(tape, temb)))};
    if (config_.use_scene) {
      FUSEMOTION_CHECK(
          scene.rows() == 1 && scene.cols() == config_.scene.feature_width, ShapeError,
          "denoiser: scene feature width mismatch");
      tokens.push_back(scene_proj_(tape, scene));
    }
    const int prefix = static_cast<int>(tokens.size());
    tokens.push_back(frames);
    ad::Var h = ad::concat_rows(tokens);
    for (const auto& layer : layers_) {
      h = layer(tape, h);
    }
    const ad::Var out = output_(tape, norm_(tape, ad::slice_rows(h, prefix, n)));
    return motion_stats.denormalize(tape, out);
  }

 private:
  DenoiserConfig config_;
  nn::ParameterSet params_;
  nn::Linear input_;
  Parameter* pos_ = nullptr;
  nn::Linear time1_;
  nn::Linear time2_;
  SceneEncoder scene_encoder_;
  nn::Linear scene_proj_;
  std::vector<nn::TransformerLayer> layers_;
  nn::LayerNorm norm_;
  nn::Linear output_;
};

/// x0 = G(x_t, t, c).
inline Mat denoise(const Denoiser& g, const DiffusionSchedule& s, const Mat& x_t, int t, const ConditionBundle& c) {
  FUSEMOTION_CHECK(t >= 1 && t <= s.steps, RangeError, "denoise: t out of range");
  ad::Tape tape;
  const ad::Var scene = g.config().use_scene ? tape.constant(c.scene.vector) : ad::Var{};
  const ad::Var periodic = g.config().use_periodic ? tape.constant(c.periodic.values) : ad::Var{};
  return g.forward(tape, tape.constant(x_t), t, s.alpha_bar(t), tape.constant(c.signals.values), periodic, scene)
      .value();
}

inline MotionSequence denoise(
    const Denoiser& g, const DiffusionSchedule& s, const MotionSequence& x_t, int t, const ConditionBundle& c) {
  return MotionSequence::from_features(denoise(g, s, x_t.to_features(), t, c), x_t.fps);
}

/// Training window for the denoiser: ground truth plus its conditions.
struct DiffusionWindow {
  MotionWindow motion;
  Mat periodic;               // N x h periodic feature curve
  Eigen::MatrixX3d scene;     // scene points prepared for the encoder (cropped, centered, voxelized)
};

struct DenoiserTrainResult {
  std::vector<double> loss;
  std::vector<double> simple;
  std::vector<double> geometric;
};

/// L = L_simple + lambda_geo L_geometric with t ~ U{1..T}; L_simple is the
/// mean squared error in normalized feature units.
inline DenoiserTrainResult train_denoiser(
    Denoiser& g, const std::vector<DiffusionWindow>& corpus, const DiffusionSchedule& s, const Skeleton& skeleton,
    const nn::TrainOptions& opt, double lambda_geometric = 1.0, bool fit_stats = true) {
  FUSEMOTION_CHECK(!corpus.empty(), DataError, "train_denoiser: empty corpus");
  if (fit_stats) {
    std::vector<const Mat*> xs;
    std::vector<const Mat*> ps;
    for (const auto& w : corpus) {
      xs.push_back(&w.motion.features);
      ps.push_back(&w.motion.signals);
    }
    g.motion_stats = nn::NormStats::fit(xs, nn::kMotionStdFloor);
    g.signal_stats = nn::NormStats::fit(ps, nn::kSignalStdFloor);
  }
  Rng rng(opt.seed);
  nn::AdamW adam(g.parameters().all(), opt.adam());
  DenoiserTrainResult out;
  for (int step = 0; step < opt.steps; ++step) {
    adam.zero_grad();
    const auto batch = nn::sample_batch(rng, corpus.size(), opt.batch);
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    double simple_sum = 0.0;
    double geo_sum = 0.0;
    for (size_t i : batch) {
      const DiffusionWindow& w = corpus[i];
      const int t = rng.uniform_int(1, s.steps);
      const Mat noise = rng.normal(w.motion.features.rows(), w.motion.features.cols());
      ad::Tape tape;
      const ad::Var x_t = tape.constant(q_sample(s, w.motion.features, t, noise));
      ad::Var scene;
      if (g.config().use_scene) {
        scene = g.scene_encoder().forward(tape, w.scene);
      }
      const ad::Var periodic = g.config().use_periodic ? tape.constant(w.periodic) : ad::Var{};
      const ad::Var pred = g.forward(tape, x_t, t, s.alpha_bar(t), tape.constant(w.motion.signals), periodic, scene);
      const ad::Var diff = ad::sub(g.motion_stats.normalize(tape, pred), tape.constant(g.motion_stats.normalize(w.motion.features)));
      const ad::Var simple = ad::mean(ad::square(diff));
      const ad::Var geo = geometric_loss(tape, pred, w.motion.positions, skeleton);
      const ad::Var loss = ad::scale(ad::add(simple, ad::scale(geo, lambda_geometric)), inv);
      tape.backward(loss);
      total += loss.scalar();
      simple_sum += simple.scalar() * inv;
      geo_sum += geo.scalar() * inv;
    }
    adam.step();
    out.loss.push_back(total);
    out.simple.push_back(simple_sum);
    out.geometric.push_back(geo_sum);
  }
  return out;
}

} // namespace fusemotion
