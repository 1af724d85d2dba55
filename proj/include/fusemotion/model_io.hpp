#pragma once

#include "fusemotion/diffusion.hpp"
#include "fusemotion/io.hpp"
#include "fusemotion/motion_prior.hpp"
#include "fusemotion/pae.hpp"

namespace fusemotion {

inline std::string fingerprint(const PaeConfig& c) {
  std::ostringstream s;
  s << "pae window=" << c.window << " latent=" << c.latent << " hidden=" << c.hidden << " kernel=" << c.kernel
    << " fps=" << c.fps << " activation=" << c.activation;
  return s.str();
}

inline std::string fingerprint(const PriorConfig& c) {
  std::ostringstream s;
  s << "prior window=" << c.window << " d=" << c.d_model << " layers=" << c.layers << " heads=" << c.heads
    << " ff=" << c.ff << " latent=" << c.latent << " fps=" << c.fps;
  return s.str();
}

inline std::string fingerprint(const DenoiserConfig& c) {
  std::ostringstream s;
  s << "denoiser window=" << c.window << " d=" << c.d_model << " layers=" << c.layers << " heads=" << c.heads
    << " ff=" << c.ff << " h=" << c.periodic_channels << " fps=" << c.fps << " scene=" << c.use_scene
    << " periodic=" << c.use_periodic << " scene_hidden=" << c.scene.hidden1 << "," << c.scene.hidden2
    << " scene_width=" << c.scene.feature_width << " voxel=" << c.scene.voxel_m;
  return s.str();
}

template <class Config>
std::uint64_t config_hash(const Config& c) {
  return fnv1a(fingerprint(c));
}

namespace model_io_detail {

inline void put_params(TensorMap& out, const nn::ParameterSet& ps) {
  for (const Parameter* p : ps.all()) {
    out[p->name] = p->value;
  }
}

inline void put_stats(TensorMap& out, const std::string& prefix, const nn::NormStats& s) {
  out[prefix + ".mean"] = s.mean;
  out[prefix + ".std"] = s.std;
}

inline const Mat& take(const TensorMap& in, const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto it = in.find(name);
  FUSEMOTION_CHECK(it != in.end(), CheckpointError, "checkpoint lacks tensor '" + name + "'");
  FUSEMOTION_CHECK(
      it->second.rows() == rows && it->second.cols() == cols, CheckpointError, "tensor '" + name + "' has the wrong shape");
  return it->second;
}

inline void get_params(const TensorMap& in, nn::ParameterSet& ps) {
  for (Parameter* p : ps.all()) {
    p->value = take(in, p->name, p->value.rows(), p->value.cols());
  }
}

inline nn::NormStats get_stats(const TensorMap& in, const std::string& prefix, Eigen::Index width) {
  return nn::NormStats{take(in, prefix + ".mean", 1, width), take(in, prefix + ".std", 1, width)};
}

/// Data-format problems inside a checkpoint surface as checkpoint errors.
template <class F>
auto as_checkpoint_error(F&& f) {
  try {
    return f();
  } catch (const CheckpointError&) {
    throw;
  } catch (const DataError& e) {
    throw CheckpointError(std::string("unreadable checkpoint: ") + e.what());
  }
}

} // namespace model_io_detail

inline void save_pae(const std::filesystem::path& path, const PeriodicAutoencoder& pae, const std::string& kind = "pae") {
  TensorMap t;
  model_io_detail::put_params(t, pae.parameters());
  model_io_detail::put_stats(t, "stats", pae.stats);
  save_checkpoint(path, kind, config_hash(pae.config()), t);
}

inline PeriodicAutoencoder load_pae(const std::filesystem::path& path, const PaeConfig& cfg, const std::string& kind = "pae") {
  Rng rng(0);
  PeriodicAutoencoder pae(cfg, rng);
  const TensorMap t = model_io_detail::as_checkpoint_error([&] { return load_checkpoint(path, kind, config_hash(cfg)); });
  model_io_detail::get_params(t, pae.parameters());
  pae.stats = model_io_detail::get_stats(t, "stats", kSignalDim);
  return pae;
}

inline void save_prior(const std::filesystem::path& path, const MotionPrior& prior) {
  TensorMap t;
  model_io_detail::put_params(t, prior.parameters());
  model_io_detail::put_stats(t, "motion_stats", prior.motion_stats);
  model_io_detail::put_stats(t, "signal_stats", prior.signal_stats);
  save_checkpoint(path, "prior", config_hash(prior.config()), t);
}

inline MotionPrior load_prior(const std::filesystem::path& path, const PriorConfig& cfg) {
  Rng rng(0);
  MotionPrior prior(cfg, rng);
  const TensorMap t = model_io_detail::as_checkpoint_error([&] { return load_checkpoint(path, "prior", config_hash(cfg)); });
  model_io_detail::get_params(t, prior.parameters());
  prior.motion_stats = model_io_detail::get_stats(t, "motion_stats", kMotionDim);
  prior.signal_stats = model_io_detail::get_stats(t, "signal_stats", kSignalDim);
  return prior;
}

inline void save_denoiser(const std::filesystem::path& path, const Denoiser& g) {
  TensorMap t;
  model_io_detail::put_params(t, g.parameters());
  model_io_detail::put_stats(t, "motion_stats", g.motion_stats);
  model_io_detail::put_stats(t, "signal_stats", g.signal_stats);
  save_checkpoint(path, "denoiser", config_hash(g.config()), t);
}

inline Denoiser load_denoiser(const std::filesystem::path& path, const DenoiserConfig& cfg) {
  Rng rng(0);
  Denoiser g(cfg, rng);
  const TensorMap t = model_io_detail::as_checkpoint_error([&] { return load_checkpoint(path, "denoiser", config_hash(cfg)); });
  model_io_detail::get_params(t, g.parameters());
  g.motion_stats = model_io_detail::get_stats(t, "motion_stats", kMotionDim);
  g.signal_stats = model_io_detail::get_stats(t, "signal_stats", kSignalDim);
  return g;
}

} // namespace fusemotion
