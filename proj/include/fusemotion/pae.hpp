#pragma once

#include "fusemotion/autodiff.hpp"
#include "fusemotion/nn.hpp"
#include "fusemotion/signals.hpp"

#include <optional>

namespace fusemotion {

/// Per-channel sinusoid parameters of the latent curves. S is in cycles.
struct PeriodicParams {
  RowVec amplitude;
  RowVec frequency;
  RowVec offset;
  RowVec phase_shift;

  Eigen::Index channels() const {
    return amplitude.size();
  }
};

/// N x h curves f_t = A sin(2 pi (F t/fps - S)) + B.
struct PeriodicFeatureCurve {
  Mat values;
};

/// [sin 2piS (h) | cos 2piS (h) | A (h)].
struct PhaseFeature {
  RowVec vector;
};

struct FrequencyParams {
  RowVec amplitude;
  RowVec frequency;
  RowVec offset;
};

namespace pae_detail {

/// Real DFT basis rows for bins 1..N/2: out.first(j-1, t) = cos(2 pi j t / N), .second the sin.
inline std::pair<Mat, Mat> dft_basis(int n) {
  const int bins = n / 2;
  Mat c(bins, n);
  Mat s(bins, n);
  for (int j = 1; j <= bins; ++j) {
    for (int t = 0; t < n; ++t) {
      // Reduce j*t mod N first so the angle stays small and exact.
      const double theta = 2.0 * kPi * static_cast<double>((static_cast<long>(j) * t) % n) / n;
      c(j - 1, t) = std::cos(theta);
      s(j - 1, t) = std::sin(theta);
    }
  }
  return {c, s};
}

inline Mat bin_frequencies(int n, double fps) {
  const int bins = n / 2;
  Mat f(1, bins);
  for (int j = 1; j <= bins; ++j) {
    f(0, j - 1) = j * fps / n;
  }
  return f;
}

/// Identity with a value fix-up so atan2 output pi/2pi = 0.5 lands on -0.5.
inline ad::Var wrap_half_open(const ad::Var& s) {
  Mat out = s.value().unaryExpr([](double v) { return v >= 0.5 ? v - 1.0 : v; });
  return s.tape()->record(std::move(out), {s}, [s](ad::Tape& tape, const Mat& g) { tape.accumulate(s, g); });
}

} // namespace pae_detail

/// Differentiable (A, F, B) of N x h latents; each returned Var is 1 x h.
struct FrequencyVars {
  ad::Var amplitude;
  ad::Var frequency;
  ad::Var offset;
};

inline FrequencyVars frequency_params(ad::Tape& tape, const ad::Var& latents, double fps) {
  const int n = static_cast<int>(latents.rows());
  FUSEMOTION_CHECK(n >= 4, LengthError, "frequency params need at least 4 frames");
  const auto [cb, sb] = pae_detail::dft_basis(n);
  const ad::Var re = ad::matmul(tape.constant(cb), latents);
  const ad::Var im = ad::matmul(tape.constant(sb), latents);
  const ad::Var power = ad::add(ad::square(re), ad::square(im));
  const ad::Var total = ad::sum_rows(power);
  const ad::Var weighted = ad::matmul(tape.constant(pae_detail::bin_frequencies(n, fps)), power);
  // Channels whose non-DC power is pure rounding noise count as having none.
  const Mat energy = latents.value().colwise().squaredNorm();
  Mat live(1, latents.cols());
  for (Eigen::Index c = 0; c < live.cols(); ++c) {
    live(0, c) = total.value()(0, c) > 1e-24 * n * energy(0, c) ? 1.0 : 0.0;
  }
  FrequencyVars out;
  out.amplitude = ad::scale(ad::sqrt(total), 2.0 / n);
  out.frequency = ad::mul_row(ad::div(weighted, total), tape.constant(live));
  out.offset = ad::matmul(tape.constant(Mat::Constant(1, n, 1.0 / n)), latents);
  return out;
}

inline FrequencyParams extract_frequency_params(const Mat& latents, double fps) {
  ad::Tape tape;
  const auto v = frequency_params(tape, tape.constant(latents), fps);
  return FrequencyParams{v.amplitude.value(), v.frequency.value(), v.offset.value()};
}

/// S = atan2(s_y, s_x) / 2pi in [-0.5, 0.5). Returns true in `degenerate` for (0, 0).
inline double phase_from_pair(double sx, double sy, bool* degenerate = nullptr) {
  if (degenerate != nullptr) {
    *degenerate = sx == 0.0 && sy == 0.0;
  }
  const double s = std::atan2(sy, sx) / (2.0 * kPi);
  return s >= 0.5 ? s - 1.0 : s;
}

inline PeriodicFeatureCurve reconstruct_periodic_feature(const PeriodicParams& p, int frames, double fps) {
  const Eigen::Index h = p.channels();
  PeriodicFeatureCurve out{Mat(frames, h)};
  for (int t = 0; t < frames; ++t) {
    const double sec = t / fps;
    for (Eigen::Index c = 0; c < h; ++c) {
      out.values(t, c) = p.amplitude(c) * std::sin(2.0 * kPi * (p.frequency(c) * sec - p.phase_shift(c))) + p.offset(c);
    }
  }
  return out;
}

inline ad::Var reconstruct_periodic_feature(
    ad::Tape& tape, const ad::Var& amplitude, const ad::Var& frequency, const ad::Var& offset, const ad::Var& phase,
    int frames, double fps) {
  Mat times(frames, 1);
  for (int t = 0; t < frames; ++t) {
    times(t, 0) = t / fps;
  }
  const ad::Var arg = ad::sub(ad::matmul(tape.constant(times), frequency), ad::broadcast_rows(phase, frames));
  return ad::add_row(ad::mul_row(ad::sin(ad::scale(arg, 2.0 * kPi)), amplitude), offset);
}

inline PhaseFeature phase_feature_vector(const PeriodicParams& p) {
  const Eigen::Index h = p.channels();
  PhaseFeature out{RowVec(3 * h)};
  for (Eigen::Index c = 0; c < h; ++c) {
    out.vector(c) = std::sin(2.0 * kPi * p.phase_shift(c));
    out.vector(h + c) = std::cos(2.0 * kPi * p.phase_shift(c));
    out.vector(2 * h + c) = p.amplitude(c);
  }
  return out;
}

inline ad::Var phase_feature_vector(const ad::Var& phase, const ad::Var& amplitude) {
  const ad::Var angle = ad::scale(phase, 2.0 * kPi);
  return ad::concat_cols({ad::sin(angle), ad::cos(angle), amplitude});
}

struct PaeConfig {
  int window = 120;
  int latent = 6;
  int hidden = 32;
  int kernel = 9;
  double fps = 30.0;
  bool activation = true; // tanh between conv layers
};

/// Everything one PAE pass produces, as tape nodes.
struct PaeForward {
  ad::Var latents;
  ad::Var amplitude;
  ad::Var frequency;
  ad::Var offset;
  ad::Var phase;
  ad::Var curve;
  ad::Var phase_feature;
  RowVec sx;
  RowVec sy;
};

class PeriodicAutoencoder {
 public:
  PeriodicAutoencoder() = default;
  PeriodicAutoencoder(const PaeConfig& config, Rng& rng) : config_(config) {
    const int c = kSignalDim;
    const int k = config.kernel;
    enc1_w_ = &params_.add("enc1.weight", nn::xavier_uniform(k * c, config.hidden, rng, k * c, config.hidden));
    enc1_b_ = &params_.add("enc1.bias", Mat::Zero(1, config.hidden));
    enc2_w_ = &params_.add(
        "enc2.weight", nn::xavier_uniform(k * config.hidden, config.latent, rng, k * config.hidden, config.latent));
    enc2_b_ = &params_.add("enc2.bias", Mat::Zero(1, config.latent));
    phase_w_ = &params_.add(
        "phase.weight", nn::xavier_uniform(config.window, 2 * config.latent, rng, config.window, 2));
    phase_b_ = &params_.add("phase.bias", Mat::Zero(1, 2 * config.latent));
    dec1_w_ = &params_.add(
        "dec1.weight", nn::xavier_uniform(config.latent, k * config.hidden, rng, k * config.latent, config.hidden));
    dec1_b_ = &params_.add("dec1.bias", Mat::Zero(1, config.hidden));
    dec2_w_ = &params_.add("dec2.weight", nn::xavier_uniform(config.hidden, k * c, rng, k * config.hidden, c));
    dec2_b_ = &params_.add("dec2.bias", Mat::Zero(1, c));
    stats = nn::NormStats::identity(c);
  }

  PeriodicAutoencoder(const PeriodicAutoencoder&) = delete;
  PeriodicAutoencoder& operator=(const PeriodicAutoencoder&) = delete;
  PeriodicAutoencoder(PeriodicAutoencoder&&) = default;
  PeriodicAutoencoder& operator=(PeriodicAutoencoder&&) = default;

  const PaeConfig& config() const {
    return config_;
  }
  nn::ParameterSet& parameters() {
    return params_;
  }
  const nn::ParameterSet& parameters() const {
    return params_;
  }

  /// Input normalization applied to raw signals.
  nn::NormStats stats;

  ad::Var encode(ad::Tape& tape, const ad::Var& normalized) const {
    FUSEMOTION_CHECK(normalized.cols() == kSignalDim, ShapeError, "pae encode: signals must be 54 wide");
    ad::Var h = ad::conv1d(normalized, tape.parameter(*enc1_w_), tape.parameter(*enc1_b_), config_.kernel);
    if (config_.activation) {
      h = ad::tanh(h);
    }
    return ad::conv1d(h, tape.parameter(*enc2_w_), tape.parameter(*enc2_b_), config_.kernel);
  }

  /// (s_x, s_y) per channel from the latents: 1 x 2h, pairs interleaved.
  ad::Var phase_pairs(ad::Tape& tape, const ad::Var& latents) const {
    FUSEMOTION_CHECK(latents.rows() == config_.window, ShapeError, "pae phase: window length mismatch");
    const ad::Var w = tape.parameter(*phase_w_);
    std::vector<ad::Var> pairs;
    for (int c = 0; c < config_.latent; ++c) {
      const ad::Var col = ad::transpose(ad::slice_cols(latents, c, 1));
      pairs.push_back(ad::matmul(col, ad::slice_cols(w, 2 * c, 2)));
    }
    return ad::add(ad::concat_cols(pairs), tape.parameter(*phase_b_));
  }

  ad::Var decode(ad::Tape& tape, const ad::Var& curve) const {
    FUSEMOTION_CHECK(curve.cols() == config_.latent, ShapeError, "pae decode: curve width mismatch");
    ad::Var h = ad::conv_transpose1d(curve, tape.parameter(*dec1_w_), tape.parameter(*dec1_b_), config_.kernel);
    if (config_.activation) {
      h = ad::tanh(h);
    }
    return ad::conv_transpose1d(h, tape.parameter(*dec2_w_), tape.parameter(*dec2_b_), config_.kernel);
  }

  /// Full analysis of normalized signals on a tape.
  PaeForward forward(ad::Tape& tape, const ad::Var& normalized) const {
    PaeForward out;
    out.latents = encode(tape, normalized);
    const auto freq = frequency_params(tape, out.latents, config_.fps);
    out.amplitude = freq.amplitude;
    out.frequency = freq.frequency;
    out.offset = freq.offset;
    const ad::Var pairs = phase_pairs(tape, out.latents);
    std::vector<ad::Var> xs;
    std::vector<ad::Var> ys;
    for (int c = 0; c < config_.latent; ++c) {
      xs.push_back(ad::slice_cols(pairs, 2 * c, 1));
      ys.push_back(ad::slice_cols(pairs, 2 * c + 1, 1));
    }
    const ad::Var sx = ad::concat_cols(xs);
    const ad::Var sy = ad::concat_cols(ys);
    out.sx = sx.value();
    out.sy = sy.value();
    out.phase = pae_detail::wrap_half_open(ad::scale(ad::atan2(sy, sx), 1.0 / (2.0 * kPi)));
    out.curve = reconstruct_periodic_feature(
        tape, out.amplitude, out.frequency, out.offset, out.phase, static_cast<int>(normalized.rows()), config_.fps);
    out.phase_feature = phase_feature_vector(out.phase, out.amplitude);
    return out;
  }

  PaeForward forward_raw(ad::Tape& tape, const ad::Var& raw_signals) const {
    return forward(tape, stats.normalize(tape, raw_signals));
  }

 private:
  PaeConfig config_;
  nn::ParameterSet params_;
  Parameter* enc1_w_ = nullptr;
  Parameter* enc1_b_ = nullptr;
  Parameter* enc2_w_ = nullptr;
  Parameter* enc2_b_ = nullptr;
  Parameter* phase_w_ = nullptr;
  Parameter* phase_b_ = nullptr;
  Parameter* dec1_w_ = nullptr;
  Parameter* dec1_b_ = nullptr;
  Parameter* dec2_w_ = nullptr;
  Parameter* dec2_b_ = nullptr;
};

/// Latent curves of raw N x 54 signals.
inline Mat pae_encode(const PeriodicAutoencoder& pae, const Mat& signals) {
  ad::Tape tape;
  return pae.encode(tape, pae.stats.normalize(tape, tape.constant(signals))).value();
}

/// Decodes curves to raw-scale signals.
inline Mat pae_decode(const PeriodicAutoencoder& pae, const Mat& curve) {
  ad::Tape tape;
  return pae.stats.denormalize(pae.decode(tape, tape.constant(curve)).value());
}

struct PhaseShiftResult {
  RowVec phase_shift;
  std::vector<bool> degenerate;
};

inline PhaseShiftResult extract_phase_shift(const PeriodicAutoencoder& pae, const Mat& latents) {
  ad::Tape tape;
  const Mat pairs = pae.phase_pairs(tape, tape.constant(latents)).value();
  PhaseShiftResult out{RowVec(pae.config().latent), {}};
  for (int c = 0; c < pae.config().latent; ++c) {
    bool deg = false;
    out.phase_shift(c) = phase_from_pair(pairs(0, 2 * c), pairs(0, 2 * c + 1), &deg);
    out.degenerate.push_back(deg);
  }
  return out;
}

/// Periodic parameters of one raw signal window.
inline PeriodicParams analyze_signals(const PeriodicAutoencoder& pae, const Mat& signals) {
  ad::Tape tape;
  const auto f = pae.forward_raw(tape, tape.constant(signals));
  return PeriodicParams{f.amplitude.value(), f.frequency.value(), f.offset.value(), f.phase.value()};
}

struct PaeCoupling {
  const PeriodicAutoencoder* reference = nullptr;
  const std::vector<Mat>* paired = nullptr; // reference-side raw signals, index-aligned with the corpus
  double weight = 1.0;
};

struct PaeTrainResult {
  std::vector<double> loss;
  std::vector<double> reconstruction;
  std::vector<double> coupling;
};

/// Reconstruction MSE of one raw window in normalized units, with its phase feature.
inline PaeForward pae_reconstruction(
    ad::Tape& tape, const PeriodicAutoencoder& pae, const Mat& raw, ad::Var* recon_loss) {
  const ad::Var x = pae.stats.normalize(tape, tape.constant(raw));
  PaeForward f = pae.forward(tape, x);
  *recon_loss = ad::mean(ad::square(ad::sub(pae.decode(tape, f.curve), x)));
  return f;
}

/// Minibatch AdamW on L = mean ||p - p~||^2 (+ coupling to a frozen reference PAE).
/// Fits normalization stats on the corpus unless `keep_stats`.
inline PaeTrainResult train_pae(
    PeriodicAutoencoder& pae, const std::vector<Mat>& corpus, const nn::TrainOptions& opt,
    std::optional<PaeCoupling> coupling = std::nullopt, bool keep_stats = false) {
  FUSEMOTION_CHECK(!corpus.empty(), DataError, "train_pae: empty corpus");
  if (!keep_stats) {
    std::vector<const Mat*> ptrs;
    for (const auto& m : corpus) {
      ptrs.push_back(&m);
    }
    pae.stats = nn::NormStats::fit(ptrs, nn::kSignalStdFloor);
  }
  std::vector<RowVec> targets;
  if (coupling) {
    FUSEMOTION_CHECK(
        coupling->reference != nullptr && coupling->paired != nullptr && coupling->paired->size() == corpus.size(),
        ValidationError, "train_pae: coupling corpus must pair with the training corpus");
    for (const auto& m : *coupling->paired) {
      ad::Tape t;
      targets.push_back(coupling->reference->forward_raw(t, t.constant(m)).phase_feature.value());
    }
  }
  Rng rng(opt.seed);
  nn::AdamW adam(pae.parameters().all(), opt.adam());
  PaeTrainResult out;
  for (int step = 0; step < opt.steps; ++step) {
    adam.zero_grad();
    double total = 0.0;
    double recon_sum = 0.0;
    double couple_sum = 0.0;
    const auto batch = nn::sample_batch(rng, corpus.size(), opt.batch);
    for (size_t i : batch) {
      ad::Tape tape;
      ad::Var recon;
      const PaeForward f = pae_reconstruction(tape, pae, corpus[i], &recon);
      ad::Var loss = recon;
      recon_sum += recon.scalar();
      if (coupling) {
        const ad::Var diff = ad::sub(f.phase_feature, tape.constant(targets[i]));
        const ad::Var c = ad::mean(ad::square(diff));
        couple_sum += c.scalar();
        loss = ad::add(loss, ad::scale(c, coupling->weight));
      }
      loss = ad::scale(loss, 1.0 / static_cast<double>(batch.size()));
      total += loss.scalar();
      tape.backward(loss);
    }
    adam.step();
    out.loss.push_back(total);
    out.reconstruction.push_back(recon_sum / static_cast<double>(batch.size()));
    out.coupling.push_back(couple_sum / static_cast<double>(batch.size()));
  }
  return out;
}

/// Mean reconstruction loss over a set of windows (no gradient).
inline double pae_evaluate(const PeriodicAutoencoder& pae, const std::vector<Mat>& windows) {
  FUSEMOTION_CHECK(!windows.empty(), DataError, "pae_evaluate: empty set");
  double sum = 0.0;
  for (const auto& w : windows) {
    ad::Tape tape;
    ad::Var recon;
    pae_reconstruction(tape, pae, w, &recon);
    sum += recon.scalar();
  }
  return sum / static_cast<double>(windows.size());
}

} // namespace fusemotion
