#pragma once

#include "fusemotion/autodiff.hpp"

#include <memory>
#include <string>
#include <vector>

namespace fusemotion::nn {

using ad::Tape;
using ad::Var;

/// Ordered, named collection of parameters owned by a model.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Mat value) {
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    return *params_.back();
  }

  std::vector<Parameter*> all() const {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) {
      out.push_back(p.get());
    }
    return out;
  }

  Parameter* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p->name == name) {
        return p.get();
      }
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) {
      p->zero_grad();
    }
  }

  size_t count() const {
    size_t n = 0;
    for (const auto& p : params_) {
      n += static_cast<size_t>(p->value.size());
    }
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
inline Mat xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng, double fan_in, double fan_out) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

struct Linear {
  Parameter* weight = nullptr; // in x out
  Parameter* bias = nullptr;   // 1 x out

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
    weight = &ps.add(name + ".weight", gain * xavier_uniform(in, out, rng, in, out));
    bias = &ps.add(name + ".bias", Mat::Zero(1, out));
  }

  Var operator()(Tape& tape, const Var& x) const {
    return ad::add_row(ad::matmul(x, tape.parameter(*weight)), tape.parameter(*bias));
  }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* shift = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int width) {
    gain = &ps.add(name + ".gain", Mat::Ones(1, width));
    shift = &ps.add(name + ".shift", Mat::Zero(1, width));
  }

  Var operator()(Tape& tape, const Var& x) const {
    return ad::add_row(ad::mul_row(ad::normalize_rows(x), tape.parameter(*gain)), tape.parameter(*shift));
  }
};

/// Pre-norm transformer encoder block with full (non-causal) attention.
struct TransformerLayer {
  int width = 0;
  int heads = 1;
  LayerNorm norm_attn;
  Linear query;
  Linear key;
  Linear value;
  Linear out;
  LayerNorm norm_ff;
  Linear ff_in;
  Linear ff_out;

  TransformerLayer() = default;
  TransformerLayer(ParameterSet& ps, const std::string& name, int d_model, int n_heads, int ff_width, Rng& rng)
      : width(d_model),
        heads(n_heads),
        norm_attn(ps, name + ".norm_attn", d_model),
        query(ps, name + ".query", d_model, d_model, rng),
        key(ps, name + ".key", d_model, d_model, rng),
        value(ps, name + ".value", d_model, d_model, rng),
        out(ps, name + ".out", d_model, d_model, rng),
        norm_ff(ps, name + ".norm_ff", d_model),
        ff_in(ps, name + ".ff_in", d_model, ff_width, rng),
        ff_out(ps, name + ".ff_out", ff_width, d_model, rng) {
    FUSEMOTION_CHECK(d_model % n_heads == 0, ValidationError, "d_model must be divisible by the head count");
  }

  Var operator()(Tape& tape, const Var& x) const {
    const Var h = norm_attn(tape, x);
    const Var q = query(tape, h);
    const Var k = key(tape, h);
    const Var v = value(tape, h);
    const int head_width = width / heads;
    const double temperature = 1.0 / std::sqrt(static_cast<double>(head_width));
    std::vector<Var> head_outputs;
    head_outputs.reserve(static_cast<size_t>(heads));
    for (int i = 0; i < heads; ++i) {
      const Var qi = ad::slice_cols(q, i * head_width, head_width);
      const Var ki = ad::slice_cols(k, i * head_width, head_width);
      const Var vi = ad::slice_cols(v, i * head_width, head_width);
      const Var scores = ad::scale(ad::matmul(qi, ad::transpose(ki)), temperature);
      head_outputs.push_back(ad::matmul(ad::softmax_rows(scores), vi));
    }
    const Var attended = heads == 1 ? head_outputs.front() : ad::concat_cols(head_outputs);
    const Var x1 = ad::add(x, out(tape, attended));
    const Var f = ff_out(tape, ad::gelu(ff_in(tape, norm_ff(tape, x1))));
    return ad::add(x1, f);
  }
};

/// AdamW: Adam moments with decoupled weight decay and optional global
/// gradient-norm clipping.
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0; // <= 0 disables clipping
  };

  AdamW(std::vector<Parameter*> params, Options options) : params_(std::move(params)), opt_(options) {
    for (Parameter* p : params_) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) {
      p->zero_grad();
    }
  }

  /// Returns the pre-clipping global gradient norm.
  double step() {
    ++step_;
    double sq = 0.0;
    for (Parameter* p : params_) {
      sq += p->grad.squaredNorm();
    }
    const double gnorm = std::sqrt(sq);
    const double clip = (opt_.clip_norm > 0.0 && gnorm > opt_.clip_norm) ? opt_.clip_norm / gnorm : 1.0;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = *params_[i];
      const Mat g = p.grad * clip;
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g.cwiseProduct(g);
      p.value *= (1.0 - opt_.lr * opt_.weight_decay);
      p.value.array() -= opt_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opt_.eps);
    }
    return gnorm;
  }

  long steps() const {
    return step_;
  }

 private:
  std::vector<Parameter*> params_;
  Options opt_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long step_ = 0;
};

/// Settings shared by the training loops.
struct TrainOptions {
  int steps = 200;
  int batch = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  AdamW::Options adam() const {
    AdamW::Options o;
    o.lr = lr;
    o.weight_decay = weight_decay;
    o.clip_norm = clip_norm;
    return o;
  }
};

/// Minibatch indices drawn with replacement.
inline std::vector<size_t> sample_batch(Rng& rng, size_t corpus_size, int batch) {
  FUSEMOTION_CHECK(corpus_size > 0, DataError, "empty training corpus");
  std::vector<size_t> idx(static_cast<size_t>(batch));
  for (auto& i : idx) {
    i = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(corpus_size) - 1));
  }
  return idx;
}

/// Sinusoidal embedding of an integer step, 1 x width.
inline Mat sinusoidal_embedding(double step, int width) {
  Mat e(1, width);
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half));
    e(0, i) = std::sin(step * freq);
    e(0, half + i) = std::cos(step * freq);
  }
  if (width % 2 == 1) {
    e(0, width - 1) = 0.0;
  }
  return e;
}

/// Std floors used when fitting feature normalization on training corpora.
inline constexpr double kMotionStdFloor = 1e-2;
inline constexpr double kSignalStdFloor = 1e-3;

/// Per-channel affine standardization with a floored standard deviation.
struct NormStats {
  RowVec mean;
  RowVec std;

  static NormStats fit(const std::vector<const Mat*>& samples, double std_floor = 1e-6) {
    FUSEMOTION_CHECK(!samples.empty(), DataError, "cannot fit normalization stats on an empty corpus");
    const Eigen::Index width = samples.front()->cols();
    RowVec total = RowVec::Zero(width);
    double count = 0.0;
    for (const Mat* s : samples) {
      FUSEMOTION_CHECK(s->cols() == width, ShapeError, "normalization corpus width mismatch");
      total += s->colwise().sum();
      count += static_cast<double>(s->rows());
    }
    NormStats out;
    out.mean = total / count;
    RowVec sq = RowVec::Zero(width);
    for (const Mat* s : samples) {
      sq += (s->rowwise() - out.mean).array().square().matrix().colwise().sum();
    }
    out.std = (sq / count).array().sqrt().max(std_floor).matrix();
    return out;
  }

  static NormStats identity(Eigen::Index width) {
    return NormStats{RowVec::Zero(width), RowVec::Ones(width)};
  }

  Eigen::Index width() const {
    return mean.size();
  }

  Mat normalize(const Mat& x) const {
    FUSEMOTION_CHECK(x.cols() == width(), ShapeError, "normalize: width mismatch with stats");
    return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
  }

  Mat denormalize(const Mat& x) const {
    FUSEMOTION_CHECK(x.cols() == width(), ShapeError, "denormalize: width mismatch with stats");
    return ((x.array().rowwise() * std.array()).matrix().rowwise() + mean);
  }

  Var normalize(Tape& tape, const Var& x) const {
    FUSEMOTION_CHECK(x.cols() == width(), ShapeError, "normalize: width mismatch with stats");
    const Var shifted = ad::add_row(x, tape.constant(-mean));
    return ad::mul_row(shifted, tape.constant(std.cwiseInverse()));
  }

  Var denormalize(Tape& tape, const Var& x) const {
    FUSEMOTION_CHECK(x.cols() == width(), ShapeError, "denormalize: width mismatch with stats");
    return ad::add_row(ad::mul_row(x, tape.constant(std)), tape.constant(mean));
  }
};

} // namespace fusemotion::nn
