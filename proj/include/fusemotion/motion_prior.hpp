#pragma once

#include "fusemotion/autodiff.hpp"
#include "fusemotion/kinematics.hpp"
#include "fusemotion/nn.hpp"
#include "fusemotion/signals.hpp"

namespace fusemotion {

struct PriorConfig {
  int window = 120;
  int d_model = 256;
  int layers = 9;
  int heads = 4;
  int ff = 512;
  int latent = 256;
  double fps = 30.0;
  double lambda_kl = 0.002;
  double lambda_recon = 1.0;
  double lambda_geometric = 0.5;
};

struct LatentCode {
  RowVec z;
};

struct PosteriorParams {
  RowVec mu;
  RowVec logvar;
};

/// 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar).
inline double kl_divergence(const RowVec& mu, const RowVec& logvar) {
  FUSEMOTION_CHECK(mu.size() == logvar.size(), ShapeError, "kl: size mismatch");
  return 0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
}

inline ad::Var kl_divergence(const ad::Var& mu, const ad::Var& logvar) {
  const ad::Var terms = ad::sub(ad::add(ad::exp(logvar), ad::square(mu)), ad::add_scalar(logvar, 1.0));
  return ad::scale(ad::sum(terms), 0.5);
}

/// Conditional VAE over motion windows given sparse signals.
class MotionPrior {
 public:
  MotionPrior() = default;
  MotionPrior(const PriorConfig& config, Rng& rng) : config_(config) {
    const int d = config.d_model;
    enc_in_ = nn::Linear(params_, "enc.in", kMotionDim + kSignalDim, d, rng);
    enc_pos_ = &params_.add("enc.pos", 0.02 * rng.normal(config.window, d));
    enc_token_ = &params_.add("enc.token", 0.02 * rng.normal(1, d));
    for (int i = 0; i < config.layers; ++i) {
      enc_layers_.emplace_back(params_, "enc.layer" + std::to_string(i), d, config.heads, config.ff, rng);
    }
    enc_norm_ = nn::LayerNorm(params_, "enc.norm", d);
    enc_out_ = nn::Linear(params_, "enc.out", d, 2 * config.latent, rng, 0.1);
    dec_signal_ = nn::Linear(params_, "dec.signal", kSignalDim, d, rng);
    dec_latent_ = nn::Linear(params_, "dec.latent", config.latent, d, rng);
    dec_pos_ = &params_.add("dec.pos", 0.02 * rng.normal(config.window, d));
    for (int i = 0; i < config.layers; ++i) {
      dec_layers_.emplace_back(params_, "dec.layer" + std::to_string(i), d, config.heads, config.ff, rng);
    }
    dec_norm_ = nn::LayerNorm(params_, "dec.norm", d);
    dec_out_ = nn::Linear(params_, "dec.out", d, kMotionDim, rng);
    motion_stats = nn::NormStats::identity(kMotionDim);
    signal_stats = nn::NormStats::identity(kSignalDim);
  }

  MotionPrior(const MotionPrior&) = delete;
  MotionPrior& operator=(const MotionPrior&) = delete;
  MotionPrior(MotionPrior&&) = default;
  MotionPrior& operator=(MotionPrior&&) = default;

  nn::NormStats motion_stats;
  nn::NormStats signal_stats;

  const PriorConfig& config() const {
    return config_;
  }
  nn::ParameterSet& parameters() {
    return params_;
  }
  const nn::ParameterSet& parameters() const {
    return params_;
  }

  /// (mu, logvar) as 1 x latent tape nodes from raw motion features and raw signals.
  std::pair<ad::Var, ad::Var> encode(ad::Tape& tape, const ad::Var& features, const ad::Var& signals) const {
    check_window(features.rows(), signals.rows());
    const ad::Var x = motion_stats.normalize(tape, features);
    const ad::Var p = signal_stats.normalize(tape, signals);
    ad::Var h = ad::add(enc_in_(tape, ad::concat_cols({x, p})), tape.parameter(*enc_pos_));
    h = ad::concat_rows({tape.parameter(*enc_token_), h});
    for (const auto& layer : enc_layers_) {
      h = layer(tape, h);
    }
    const ad::Var out = enc_out_(tape, enc_norm_(tape, ad::slice_rows(h, 0, 1)));
    return {ad::slice_cols(out, 0, config_.latent), ad::slice_cols(out, config_.latent, config_.latent)};
  }

  /// Raw motion features N x 135 from a latent code and raw signals.
  ad::Var decode(ad::Tape& tape, const ad::Var& z, const ad::Var& signals) const {
    check_window(signals.rows(), signals.rows());
    FUSEMOTION_CHECK(z.cols() == config_.latent, ShapeError, "prior decode: latent width mismatch");
    const ad::Var p = signal_stats.normalize(tape, signals);
    ad::Var h = ad::add(dec_signal_(tape, p), tape.parameter(*dec_pos_));
    h = ad::add(h, ad::broadcast_rows(dec_latent_(tape, z), signals.rows()));
    for (const auto& layer : dec_layers_) {
      h = layer(tape, h);
    }
    return motion_stats.denormalize(tape, dec_out_(tape, dec_norm_(tape, h)));
  }

 private:
  void check_window(Eigen::Index a, Eigen::Index b) const {
    FUSEMOTION_CHECK(a == config_.window && b == config_.window, ShapeError, "prior: window length mismatch");
  }

  PriorConfig config_;
  nn::ParameterSet params_;
  nn::Linear enc_in_;
  Parameter* enc_pos_ = nullptr;
  Parameter* enc_token_ = nullptr;
  std::vector<nn::TransformerLayer> enc_layers_;
  nn::LayerNorm enc_norm_;
  nn::Linear enc_out_;
  nn::Linear dec_signal_;
  nn::Linear dec_latent_;
  Parameter* dec_pos_ = nullptr;
  std::vector<nn::TransformerLayer> dec_layers_;
  nn::LayerNorm dec_norm_;
  nn::Linear dec_out_;
};

inline PosteriorParams prior_encode(const MotionPrior& prior, const MotionSequence& motion, const SparseSignals& signals) {
  FUSEMOTION_CHECK(signals.values.cols() == kSignalDim, ShapeError, "prior encode: signals must be 54 wide");
  ad::Tape tape;
  const auto [mu, logvar] = prior.encode(tape, tape.constant(motion.to_features()), tape.constant(signals.values));
  return PosteriorParams{mu.value(), logvar.value()};
}

inline MotionSequence prior_decode(const MotionPrior& prior, const LatentCode& code, const SparseSignals& signals) {
  ad::Tape tape;
  const Mat x = prior.decode(tape, tape.constant(code.z), tape.constant(signals.values)).value();
  return MotionSequence::from_features(x, prior.config().fps);
}

/// x~ = f(z, p) with z ~ N(0, I) drawn from `rng`.
inline MotionSequence sample_initial_motion(const MotionPrior& prior, const SparseSignals& signals, Rng& rng) {
  return prior_decode(prior, LatentCode{rng.normal(1, prior.config().latent)}, signals);
}

/// One paired training window in raw units.
struct MotionWindow {
  Mat features;        // N x 135
  Mat signals;         // N x 54 upper-body observations
  Mat positions;       // N x 66 FK joint positions of `features`
};

struct PriorTrainResult {
  std::vector<double> loss;
  std::vector<double> kl;
  std::vector<double> reconstruction;
  std::vector<double> geometric;
};

/// Fits motion/signal normalization on the corpus and trains the CVAE.
inline PriorTrainResult train_prior(
    MotionPrior& prior, const std::vector<MotionWindow>& corpus, const Skeleton& skeleton, const nn::TrainOptions& opt,
    bool fit_stats = true) {
  FUSEMOTION_CHECK(!corpus.empty(), DataError, "train_prior: empty corpus");
  if (fit_stats) {
    std::vector<const Mat*> xs;
    std::vector<const Mat*> ps;
    for (const auto& w : corpus) {
      xs.push_back(&w.features);
      ps.push_back(&w.signals);
    }
    prior.motion_stats = nn::NormStats::fit(xs, nn::kMotionStdFloor);
    prior.signal_stats = nn::NormStats::fit(ps, nn::kSignalStdFloor);
  }
  const auto& cfg = prior.config();
  Rng rng(opt.seed);
  nn::AdamW adam(prior.parameters().all(), opt.adam());
  PriorTrainResult out;
  for (int step = 0; step < opt.steps; ++step) {
    adam.zero_grad();
    const auto batch = nn::sample_batch(rng, corpus.size(), opt.batch);
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    double kl_sum = 0.0;
    double rec_sum = 0.0;
    double geo_sum = 0.0;
    for (size_t i : batch) {
      const MotionWindow& w = corpus[i];
      ad::Tape tape;
      const ad::Var x = tape.constant(w.features);
      const ad::Var p = tape.constant(w.signals);
      const auto [mu, logvar] = prior.encode(tape, x, p);
      const ad::Var eps = tape.constant(rng.normal(1, cfg.latent));
      const ad::Var z = ad::add(mu, ad::mul(ad::exp(ad::scale(logvar, 0.5)), eps));
      const ad::Var pred = prior.decode(tape, z, p);
      const ad::Var kl = kl_divergence(mu, logvar);
      const ad::Var rec = ad::mean(ad::square(ad::sub(prior.motion_stats.normalize(tape, pred), prior.motion_stats.normalize(tape, x))));
      const ad::Var geo = geometric_loss(tape, pred, w.positions, skeleton);
      const ad::Var loss = ad::scale(
          ad::add(ad::add(ad::scale(kl, cfg.lambda_kl), ad::scale(rec, cfg.lambda_recon)), ad::scale(geo, cfg.lambda_geometric)),
          inv);
      tape.backward(loss);
      total += loss.scalar();
      kl_sum += kl.scalar() * inv;
      rec_sum += rec.scalar() * inv;
      geo_sum += geo.scalar() * inv;
    }
    adam.step();
    out.loss.push_back(total);
    out.kl.push_back(kl_sum);
    out.reconstruction.push_back(rec_sum);
    out.geometric.push_back(geo_sum);
  }
  return out;
}

} // namespace fusemotion
