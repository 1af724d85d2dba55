#pragma once

#include "fusemotion/config.hpp"
#include "fusemotion/datagen.hpp"
#include "fusemotion/metrics.hpp"
#include "fusemotion/model_io.hpp"
#include "fusemotion/sampler.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fusemotion {

// ---------------------------------------------------------------------------
// Config translation

inline CorpusSpec corpus_spec(const RunConfig& c) {
  CorpusSpec s;
  s.scenes = c.scenes;
  s.sequences = c.sequences;
  s.frames = c.sequence_frames;
  s.fps = c.fps;
  s.obstacle_density = c.obstacle_density_per_m2;
  s.floor_half_extent_m = c.floor_half_extent_m;
  s.point_spacing_m = c.point_spacing_m;
  s.test_fraction = c.test_fraction;
  s.floor_range_m = c.floor_range_m;
  s.max_crouch_m = c.max_crouch_m;
  return s;
}

inline PaeConfig pae_config(const RunConfig& c) {
  PaeConfig p;
  p.window = c.window_frames;
  p.latent = c.pae_channels;
  p.hidden = c.pae_hidden;
  p.kernel = c.pae_kernel;
  p.fps = c.fps;
  return p;
}

inline PriorConfig prior_config(const RunConfig& c) {
  PriorConfig p;
  p.window = c.window_frames;
  p.d_model = c.d_model;
  p.layers = c.prior_layers;
  p.heads = c.heads;
  p.ff = c.ff_width;
  p.latent = c.prior_latent;
  p.fps = c.fps;
  p.lambda_kl = c.lambda_kl;
  p.lambda_recon = c.lambda_recon;
  p.lambda_geometric = c.lambda_geometric;
  return p;
}

inline DenoiserConfig denoiser_config(const RunConfig& c) {
  DenoiserConfig d;
  d.window = c.window_frames;
  d.d_model = c.d_model;
  d.layers = c.denoiser_layers;
  d.heads = c.heads;
  d.ff = c.ff_width;
  d.periodic_channels = c.pae_channels;
  d.fps = c.fps;
  d.use_scene = c.use_scene;
  d.use_periodic = c.use_periodic;
  d.scene.hidden1 = c.scene_hidden1;
  d.scene.hidden2 = c.scene_hidden2;
  d.scene.feature_width = c.scene_feature_width;
  d.scene.voxel_m = c.scene_voxel_m;
  return d;
}

inline DiffusionSchedule schedule_of(const RunConfig& c) {
  return make_schedule(c.diffusion_steps, c.beta_start, c.beta_end);
}

// Independent seed streams per training stage.
enum class Stage : std::uint64_t { kUpperPae = 11, kAnchorPae = 12, kPrior = 13, kDenoiser = 14, kModelInit = 15 };

inline nn::TrainOptions train_options(const RunConfig& c, int steps, Stage stage) {
  nn::TrainOptions o;
  o.steps = steps;
  o.batch = c.batch;
  o.lr = c.learning_rate;
  o.weight_decay = c.weight_decay;
  o.clip_norm = c.clip_norm;
  o.seed = derive_seed(c.seed, static_cast<std::uint64_t>(stage));
  return o;
}

inline CropOptions crop_options(const RunConfig& c) {
  return CropOptions{0.5 * c.crop_size_m, c.crop_drop_m};
}

inline GuidanceConfig guidance_config(const RunConfig& c) {
  GuidanceConfig g;
  g.alpha = c.guide_penetration ? c.guidance_alpha : 0.0;
  g.beta = c.guide_phase ? c.guidance_beta : 0.0;
  g.eta = c.guidance_eta;
  g.radius = c.contact_radius_m;
  g.k = c.knn_k;
  g.contact_joints = c.contact_joints;
  return g;
}

inline SamplerOptions sampler_options(const RunConfig& c) {
  SamplerOptions o;
  o.guidance = guidance_config(c);
  o.guided = c.guide_penetration || c.guide_phase;
  o.use_prior = c.use_prior;
  o.noise_prior = c.noise_prior;
  o.crop = crop_options(c);
  return o;
}

// ---------------------------------------------------------------------------
// Windows

/// One N-frame slice of a corpus sequence in world coordinates.
struct CorpusWindow {
  int sequence = 0;
  int start = 0;
  MotionSequence motion;
  SparseSignals signals;
  const SceneFile* scene = nullptr;
};

inline std::vector<int> slice_starts(int total, int window, int stride) {
  std::vector<int> out;
  for (int s = 0; s + window <= total; s += stride) {
    out.push_back(s);
  }
  return out;
}

/// Train windows overlap by the configured stride; test windows tile without overlap.
inline std::vector<CorpusWindow> corpus_windows(const SyntheticCorpus& corpus, const RunConfig& c, bool test) {
  std::vector<CorpusWindow> out;
  const int n = c.window_frames;
  for (size_t i = 0; i < corpus.sequences.size(); ++i) {
    const SyntheticSequence& q = corpus.sequences[i];
    if (q.test != test) {
      continue;
    }
    const MotionSequence& m = q.motion.motion;
    for (int s : slice_starts(m.frames(), n, test ? n : c.window_stride_frames)) {
      CorpusWindow w;
      w.sequence = static_cast<int>(i);
      w.start = s;
      w.motion = MotionSequence(m.root_translation.middleRows(s, n), m.local_rotations.middleRows(s, n), m.fps);
      w.signals = extract_sparse_signals(q.motion.skeleton, w.motion);
      w.scene = &corpus.scenes[static_cast<size_t>(q.scene)].file;
      out.push_back(std::move(w));
    }
  }
  FUSEMOTION_CHECK(!out.empty(), DataError, std::string("corpus has no ") + (test ? "test" : "train") + " windows");
  return out;
}

/// A window moved into the sampler's canonical frame (first-frame head xy at the origin).
struct CanonicalWindow {
  MotionWindow motion;
  Mat anchor_signals;
  ScenePointCloud cloud;
  Vec3 offset = Vec3::Zero();
};

inline CanonicalWindow canonicalize(const CorpusWindow& w, const Skeleton& sk) {
  CanonicalWindow out;
  out.offset = canonical_offset(w.signals);
  const MotionSequence m = shift_motion(w.motion, out.offset);
  out.motion.features = m.to_features();
  out.motion.signals = shift_signals(w.signals, out.offset).values;
  out.motion.positions = forward_kinematics(sk, m).positions;
  out.anchor_signals = extract_anchor_signals(sk, m).values;
  out.cloud = shift_cloud(w.scene->cloud, out.offset);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainedModels {
  PeriodicAutoencoder upper;
  PeriodicAutoencoder anchor;
  MotionPrior prior;
  Denoiser denoiser;
  DiffusionSchedule schedule;
  Skeleton skeleton = Skeleton::standard();

  SamplerModels view() const {
    SamplerModels v;
    v.prior = &prior;
    v.denoiser = &denoiser;
    v.upper_pae = &upper;
    v.anchor_pae = &anchor;
    v.skeleton = skeleton;
    v.schedule = schedule;
    return v;
  }
};

using ProgressFn = std::function<void(const std::string& stage, int step, double loss)>;

inline void report(const ProgressFn& fn, const std::string& stage, const std::vector<double>& loss) {
  if (!fn) {
    return;
  }
  const int every = std::max<int>(1, static_cast<int>(loss.size()) / 10);
  for (size_t i = 0; i < loss.size(); ++i) {
    if (static_cast<int>(i) % every == 0 || i + 1 == loss.size()) {
      fn(stage, static_cast<int>(i), loss[i]);
    }
  }
}

struct PaePair {
  PeriodicAutoencoder upper;
  PeriodicAutoencoder anchor;
  PaeTrainResult upper_log;
  PaeTrainResult anchor_log;
};

/// Upper PAE on tracker signals; the anchor twin shares its normalization and
/// is pulled toward the upper phase features of the same windows.
inline PaePair train_paes(const std::vector<CanonicalWindow>& train, const RunConfig& c) {
  Rng init(derive_seed(c.seed, static_cast<std::uint64_t>(Stage::kModelInit)));
  PaePair out;
  out.upper = PeriodicAutoencoder(pae_config(c), init);
  out.anchor = PeriodicAutoencoder(pae_config(c), init);
  std::vector<Mat> upper_sig;
  std::vector<Mat> anchor_sig;
  for (const auto& w : train) {
    upper_sig.push_back(w.motion.signals);
    anchor_sig.push_back(w.anchor_signals);
  }
  out.upper_log = train_pae(out.upper, upper_sig, train_options(c, c.pae_steps, Stage::kUpperPae));
  out.anchor.stats = out.upper.stats;
  out.anchor_log = train_pae(
      out.anchor, anchor_sig, train_options(c, c.pae_steps, Stage::kAnchorPae),
      PaeCoupling{&out.upper, &upper_sig, c.pae_coupling_weight}, true);
  return out;
}

inline std::pair<MotionPrior, PriorTrainResult> train_motion_prior(
    const std::vector<CanonicalWindow>& train, const RunConfig& c, const Skeleton& sk) {
  Rng init(derive_seed(c.seed, static_cast<std::uint64_t>(Stage::kModelInit) + 1));
  MotionPrior prior(prior_config(c), init);
  std::vector<MotionWindow> windows;
  for (const auto& w : train) {
    windows.push_back(w.motion);
  }
  PriorTrainResult log = train_prior(prior, windows, sk, train_options(c, c.prior_steps, Stage::kPrior));
  return {std::move(prior), std::move(log)};
}

/// Conditions exactly as the sampler assembles them at inference.
inline std::vector<DiffusionWindow> diffusion_windows(
    const std::vector<CanonicalWindow>& train, const PeriodicAutoencoder& upper, const Denoiser& g, const RunConfig& c) {
  const CropOptions crop = crop_options(c);
  std::vector<DiffusionWindow> out;
  out.reserve(train.size());
  for (const auto& w : train) {
    DiffusionWindow d;
    d.motion = w.motion;
    const SparseSignals sig{w.motion.signals};
    d.periodic = reconstruct_periodic_feature(analyze_signals(upper, sig.values), sig.frames(), c.fps).values;
    const Vec3 center = crop_center(sig, crop);
    d.scene = g.scene_encoder().prepare(crop_bounding_box(w.cloud, center, crop.half_extent_m).cloud, center);
    out.push_back(std::move(d));
  }
  return out;
}

inline std::pair<Denoiser, DenoiserTrainResult> train_diffusion_model(
    const std::vector<CanonicalWindow>& train, const PeriodicAutoencoder& upper, const RunConfig& c, const Skeleton& sk) {
  Rng init(derive_seed(c.seed, static_cast<std::uint64_t>(Stage::kModelInit) + 2));
  Denoiser g(denoiser_config(c), init);
  const auto windows = diffusion_windows(train, upper, g, c);
  DenoiserTrainResult log = train_denoiser(
      g, windows, schedule_of(c), sk, train_options(c, c.denoiser_steps, Stage::kDenoiser), c.denoiser_lambda_geometric);
  return {std::move(g), std::move(log)};
}

inline std::vector<CanonicalWindow> canonical_windows(const std::vector<CorpusWindow>& ws, const Skeleton& sk) {
  std::vector<CanonicalWindow> out;
  out.reserve(ws.size());
  for (const auto& w : ws) {
    out.push_back(canonicalize(w, sk));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Frames x contact joints whose nearest scene point lies inside the radius.
inline int penetration_count(const MotionSequence& m, const Skeleton& sk, const KdTree& tree, const GuidanceConfig& g) {
  const Mat p = forward_kinematics(sk, m).positions;
  int count = 0;
  for (int f = 0; f < p.rows(); ++f) {
    for (int j : g.contact_joints) {
      const Vec3 x = p.block<1, 3>(f, 3 * j).transpose();
      const auto nn = knn_query(tree, x, 1);
      if (!nn.empty() && nn.front().distance < g.radius) {
        ++count;
      }
    }
  }
  return count;
}

struct EvalSummary {
  MetricRow metrics;
  double penetration_loss = 0.0; // mean per window
  double penetration_count = 0.0; // mean per window
  int windows = 0;
};

inline void accumulate(EvalSummary& acc, const MetricRow& r, double loss, int count) {
  acc.metrics.mpjre += r.mpjre;
  acc.metrics.mpjpe += r.mpjpe;
  acc.metrics.mpjve += r.mpjve;
  acc.metrics.jitter += r.jitter;
  acc.metrics.foot_skate += r.foot_skate;
  acc.metrics.hand_pe += r.hand_pe;
  acc.metrics.upper_pe += r.upper_pe;
  acc.metrics.lower_pe += r.lower_pe;
  acc.penetration_loss += loss;
  acc.penetration_count += count;
  ++acc.windows;
}

inline EvalSummary finish(EvalSummary acc) {
  if (acc.windows == 0) {
    return acc;
  }
  const double inv = 1.0 / acc.windows;
  MetricRow& m = acc.metrics;
  for (double* v : {&m.mpjre, &m.mpjpe, &m.mpjve, &m.jitter, &m.foot_skate, &m.hand_pe, &m.upper_pe, &m.lower_pe}) {
    *v *= inv;
  }
  acc.penetration_loss *= inv;
  acc.penetration_count *= inv;
  return acc;
}

inline FootContactOptions contact_options(const RunConfig& c, double floor) {
  return FootContactOptions{floor, c.contact_height_m, c.contact_speed_mps};
}

/// Metrics of one prediction against ground truth in its scene.
inline void score(
    EvalSummary& acc, const MotionSequence& pred, const MotionSequence& gt, const SceneFile& scene, const KdTree& tree,
    const Skeleton& sk, const RunConfig& c) {
  const GuidanceConfig g = guidance_config(c);
  GuidanceConfig loss_cfg = g;
  loss_cfg.alpha = 1.0;
  accumulate(
      acc, evaluate_all(pred, gt, sk, c.fps, contact_options(c, scene.floor_height)),
      penetration_loss(pred, sk, tree, loss_cfg), penetration_count(pred, sk, tree, g));
}

/// Samples every test window with `models` and scores it. Window i uses derive_seed(seed, i).
inline EvalSummary evaluate_models(
    const SamplerModels& models, const std::vector<CorpusWindow>& test, const RunConfig& c, std::uint64_t seed,
    std::vector<MotionSequence>* predictions = nullptr) {
  const SamplerOptions opt = sampler_options(c);
  EvalSummary acc;
  std::map<const SceneFile*, KdTree> trees;
  for (size_t i = 0; i < test.size(); ++i) {
    const CorpusWindow& w = test[i];
    auto it = trees.find(w.scene);
    if (it == trees.end()) {
      it = trees.emplace(w.scene, KdTree(w.scene->cloud.points)).first;
    }
    const MotionSequence pred = estimate_motion(w.signals, w.scene->cloud, models, opt, derive_seed(seed, i));
    score(acc, pred, w.motion, *w.scene, it->second, models.skeleton, c);
    if (predictions != nullptr) {
      predictions->push_back(pred);
    }
  }
  return finish(acc);
}

/// Evenly spaced subset of at most `max` windows (0 keeps all).
inline std::vector<CorpusWindow> limit_windows(const std::vector<CorpusWindow>& ws, int max) {
  if (max <= 0 || static_cast<int>(ws.size()) <= max) {
    return ws;
  }
  std::vector<CorpusWindow> out;
  for (int i = 0; i < max; ++i) {
    out.push_back(ws[static_cast<size_t>(i) * ws.size() / static_cast<size_t>(max)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model directories

namespace model_files {
inline std::filesystem::path upper_pae(const std::filesystem::path& dir) {
  return dir / "upper.pae.ckpt";
}
inline std::filesystem::path anchor_pae(const std::filesystem::path& dir) {
  return dir / "anchor.pae.ckpt";
}
inline std::filesystem::path prior(const std::filesystem::path& dir) {
  return dir / "prior.ckpt";
}
inline std::filesystem::path denoiser(const std::filesystem::path& dir, bool scene, bool periodic) {
  return dir / ("denoiser_scene" + std::to_string(scene ? 1 : 0) + "_pae" + std::to_string(periodic ? 1 : 0) + ".ckpt");
}
} // namespace model_files

inline void save_paes(const std::filesystem::path& dir, const PaePair& p) {
  save_pae(model_files::upper_pae(dir), p.upper, "upper_pae");
  save_pae(model_files::anchor_pae(dir), p.anchor, "anchor_pae");
}

/// Loads whatever the sampler needs for the toggles in `c`.
inline TrainedModels load_models(const std::filesystem::path& dir, const RunConfig& c) {
  TrainedModels m;
  m.upper = load_pae(model_files::upper_pae(dir), pae_config(c), "upper_pae");
  m.anchor = load_pae(model_files::anchor_pae(dir), pae_config(c), "anchor_pae");
  if (c.use_prior) {
    m.prior = load_prior(model_files::prior(dir), prior_config(c));
  }
  m.denoiser = load_denoiser(model_files::denoiser(dir, c.use_scene, c.use_periodic), denoiser_config(c));
  m.schedule = schedule_of(c);
  return m;
}

// ---------------------------------------------------------------------------
// Ablations

struct Toggles {
  bool prior = true;
  bool scene = true;
  bool periodic = true;
  bool penetration = true;
  bool phase = true;

  static Toggles from(const RunConfig& c) {
    return Toggles{c.use_prior, c.use_scene, c.use_periodic, c.guide_penetration, c.guide_phase};
  }

  RunConfig apply(RunConfig c) const {
    c.use_prior = prior;
    c.use_scene = scene;
    c.use_periodic = periodic;
    c.guide_penetration = penetration;
    c.guide_phase = phase;
    return c;
  }
};

inline const std::vector<std::string>& toggle_names() {
  static const std::vector<std::string> names{"prior", "scene", "pae", "pen", "phase"};
  return names;
}

/// Every on/off combination of the named toggles; the rest keep their config values.
inline std::vector<Toggles> toggle_grid(const std::vector<std::string>& vary, const RunConfig& base) {
  for (const auto& v : vary) {
    const auto& n = toggle_names();
    FUSEMOTION_CHECK(std::find(n.begin(), n.end(), v) != n.end(), UsageError, "unknown ablation toggle '" + v + "'");
  }
  std::vector<Toggles> out;
  const size_t combos = size_t{1} << vary.size();
  for (size_t mask = 0; mask < combos; ++mask) {
    Toggles t = Toggles::from(base);
    for (size_t i = 0; i < vary.size(); ++i) {
      const bool on = (mask >> (vary.size() - 1 - i)) & 1u;
      const std::string& v = vary[i];
      (v == "prior" ? t.prior : v == "scene" ? t.scene : v == "pae" ? t.periodic : v == "pen" ? t.penetration : t.phase) = on;
    }
    out.push_back(t);
  }
  return out;
}

inline std::string toggle_header() {
  return "prior scene pae pen phase";
}

inline std::string toggle_line(const Toggles& t) {
  std::ostringstream o;
  o << t.prior << "     " << t.scene << "     " << t.periodic << "   " << t.penetration << "   " << t.phase;
  return o.str();
}

inline std::string metric_header() {
  return "MPJRE_deg MPJPE_mm MPJVE_mm_s Jitter_1e2m_s3 FS_cm HandPE_mm UpperPE_mm LowerPE_mm PenLoss PenCount";
}

inline std::string metric_line(const EvalSummary& e) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(4);
  const MetricRow& m = e.metrics;
  o << m.mpjre << ' ' << m.mpjpe << ' ' << m.mpjve << ' ' << m.jitter << ' ' << m.foot_skate << ' ' << m.hand_pe << ' '
    << m.upper_pe << ' ' << m.lower_pe << ' ' << e.penetration_loss << ' ' << e.penetration_count;
  return o.str();
}

} // namespace fusemotion
