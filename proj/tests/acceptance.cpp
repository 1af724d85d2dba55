#include "fusemotion/pipeline.hpp"

#include "oracles.hpp"
#include "test_utils.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sys/wait.h>
#include <unistd.h>

using namespace fusemotion;
namespace fs = std::filesystem;
using fusemotion::testing::numerical_gradient;
using fusemotion::testing::relative_error;
using fusemotion::testing::smooth_random_motion;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

// ---------------------------------------------------------------------------
// 1. oracle equivalence

Outcome oracle_suite() {
  Outcome out;
  Rng rng(101);
  const Skeleton sk = Skeleton::standard();

  double rot_err = 0.0;
  double gs_err = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const Vec6 r = fusemotion::testing::random_rot6d(rng);
    const Mat3 m = rot6d_to_matrix(r);
    gs_err = std::max(gs_err, (m - oracle::gram_schmidt(r)).cwiseAbs().maxCoeff());
    rot_err = std::max(rot_err, (rot6d_to_matrix(matrix_to_rot6d(m)) - m).cwiseAbs().maxCoeff());
  }
  out.check(rot_err < 1e-6 && gs_err < 1e-6, "rot6d round trip max err " + fmt(rot_err) + ", Gram-Schmidt " + fmt(gs_err));

  double fk_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const MotionSequence m = fusemotion::testing::random_motion(rng, 8);
    const auto fk = forward_kinematics(sk, m);
    for (int f = 0; f < m.frames(); ++f) {
      for (int j = 0; j < kNumJoints; ++j) {
        Mat3 r;
        Vec3 p;
        oracle::world_transform(sk, m, f, j, r, p);
        fk_err = std::max(fk_err, (fk.at(f, j) - p).norm());
      }
    }
  }
  out.check(fk_err < 1e-6, "FK vs recursive chain max err " + fmt(fk_err));

  int knn_mismatch = 0;
  int knn_queries = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + rng.uniform_int(0, 800);
    const Eigen::MatrixX3d pts = 2.0 * rng.normal(n, 3);
    const KdTree tree(pts);
    for (int q = 0; q < 50; ++q) {
      const Vec3 query(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
      const int k = 1 + rng.uniform_int(0, 9);
      const auto got = tree.knn(query, k);
      const auto want = oracle::knn(pts, query, k);
      ++knn_queries;
      bool same = got.size() == want.size();
      for (size_t i = 0; same && i < got.size(); ++i) {
        same = got[i].index == want[i].index && got[i].distance == want[i].distance;
      }
      knn_mismatch += same ? 0 : 1;
    }
  }
  out.check(knn_mismatch == 0, "KNN vs brute force: " + std::to_string(knn_mismatch) + " of " + std::to_string(knn_queries) + " differ");

  double pen_err = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    const MotionSequence m = smooth_random_motion(r, 6);
    GuidanceConfig cfg;
    cfg.radius = 0.3;
    cfg.k = 1 + static_cast<int>(seed % 5);
    const Mat pos = forward_kinematics(sk, m).positions;
    Eigen::MatrixX3d cloud(300, 3);
    for (int i = 0; i < 300; ++i) {
      const int f = r.uniform_int(0, 5);
      const int j = cfg.contact_joints[static_cast<size_t>(r.uniform_int(0, 3))];
      cloud.row(i) = pos.block<1, 3>(f, 3 * j) + 0.25 * r.normal(1, 3);
    }
    pen_err = std::max(pen_err, std::abs(penetration_loss(m, sk, ScenePointCloud{cloud}, cfg) - oracle::penetration(m, sk, cloud, cfg)));
  }
  out.check(pen_err < 1e-9, "penetration loss vs double sum max err " + fmt(pen_err));

  double dft_err = 0.0;
  for (int n : {4, 9, 16, 60, 120}) {
    const Mat x = rng.normal(n, 6);
    const auto got = extract_frequency_params(x, 30.0);
    const auto want = oracle::dft_params(x, 30.0);
    dft_err = std::max(
        {dft_err, (got.amplitude - want.amplitude).cwiseAbs().maxCoeff(), (got.frequency - want.frequency).cwiseAbs().maxCoeff(),
         (got.offset - want.offset).cwiseAbs().maxCoeff()});
  }
  out.check(dft_err < 1e-9, "DFT parameters vs O(N^2) DFT max err " + fmt(dft_err));

  double sched_err = 0.0;
  for (int steps : {1, 2, 10, 50, 1000}) {
    const auto s = make_schedule(steps, 1e-4, 2e-2);
    const auto want = oracle::alpha_bar(steps, 1e-4, 2e-2);
    for (int t = 0; t <= steps; ++t) {
      sched_err = std::max(sched_err, std::abs(s.alpha_bar(t) - want[static_cast<size_t>(t)]));
    }
  }
  out.check(sched_err < 1e-12, "schedule vs cumulative product max err " + fmt(sched_err));
  return out;
}

// ---------------------------------------------------------------------------
// 2. gradients

double fraction_within(const Mat& analytic, const Mat& numeric, const std::vector<Eigen::Index>& coords) {
  int good = 0;
  for (Eigen::Index i : coords) {
    good += relative_error(analytic(i), numeric(i), 1e-7) <= 1e-3 ? 1 : 0;
  }
  return static_cast<double>(good) / static_cast<double>(coords.size());
}

/// Central differences on a random coordinate subset.
Mat sampled_fd(const std::function<double(const Mat&)>& f, const Mat& x, const std::vector<Eigen::Index>& coords) {
  Mat g = Mat::Zero(x.rows(), x.cols());
  Mat xp = x;
  const double h = 1e-6;
  for (Eigen::Index i : coords) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

std::vector<Eigen::Index> random_coords(Rng& rng, Eigen::Index size, int count) {
  std::vector<Eigen::Index> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(rng.uniform_int(0, static_cast<int>(size) - 1));
  }
  return out;
}

Outcome gradient_suite() {
  Outcome out;
  const Skeleton sk = Skeleton::standard();
  double worst_pen = 1.0;
  double worst_phase = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(200 + seed);
    const MotionSequence m = smooth_random_motion(rng, 4);
    GuidanceConfig cfg;
    const Eigen::MatrixX3d cloud = oracle::scene_near_joints(rng, m, sk, cfg);
    const KdTree tree(cloud);
    const Mat x = m.to_features();
    const auto lg = penetration_loss_and_gradient(x, sk, tree, cfg);
    const auto coords = random_coords(rng, x.size(), 300);
    const Mat fd = sampled_fd([&](const Mat& v) { return penetration_loss_and_gradient(v, sk, tree, cfg, false).value; }, x, coords);
    worst_pen = std::min(worst_pen, fraction_within(lg.gradient, fd, coords));
  }
  out.check(worst_pen >= 0.95, "penetration gradient: worst-case fraction within 1e-3 = " + fmt(worst_pen));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(300 + seed);
    const int n = 12;
    PaeConfig pc;
    pc.window = n;
    pc.latent = 3;
    pc.hidden = 4;
    pc.kernel = 3;
    PeriodicAutoencoder upper(pc, rng);
    PeriodicAutoencoder anchor(pc, rng);
    const MotionSequence m = smooth_random_motion(rng, n);
    const RowVec p_upper = upper_phase_feature(upper, extract_sparse_signals(sk, smooth_random_motion(rng, n)));
    const Mat x = m.to_features();
    const auto lg = phase_matching_loss_and_gradient(x, anchor, sk, p_upper, 30.0);
    const auto coords = random_coords(rng, x.size(), 300);
    const Mat fd = sampled_fd(
        [&](const Mat& v) { return phase_matching_loss_and_gradient(v, anchor, sk, p_upper, 30.0, false).value; }, x, coords);
    worst_phase = std::min(worst_phase, fraction_within(lg.gradient, fd, coords));
  }
  out.check(worst_phase >= 0.95, "phase gradient: worst-case fraction within 1e-3 = " + fmt(worst_phase));
  return out;
}

// ---------------------------------------------------------------------------
// Tiny models shared by criteria 3 and 6

RunConfig tiny_config() {
  RunConfig c;
  c.scenes = 2;
  c.sequences = 6;
  c.sequence_frames = 40;
  c.window_frames = 16;
  c.window_stride_frames = 8;
  c.pae_steps = 12;
  c.pae_hidden = 4;
  c.d_model = 8;
  c.heads = 2;
  c.ff_width = 8;
  c.prior_layers = 1;
  c.denoiser_layers = 1;
  c.prior_latent = 4;
  c.scene_hidden1 = 4;
  c.scene_hidden2 = 4;
  c.scene_feature_width = 8;
  c.batch = 2;
  c.prior_steps = 12;
  c.denoiser_steps = 12;
  c.diffusion_steps = 8;
  return c;
}

struct TinyRun {
  SyntheticCorpus corpus;
  TrainedModels models;
  std::vector<double> pae_loss;
  std::vector<double> prior_loss;
  std::vector<double> denoiser_loss;
};

TinyRun tiny_run(const RunConfig& c) {
  TinyRun r;
  const Skeleton sk = Skeleton::standard();
  r.corpus = generate_synthetic_corpus(corpus_spec(c), c.seed);
  const auto train = canonical_windows(corpus_windows(r.corpus, c, false), sk);
  PaePair p = train_paes(train, c);
  r.pae_loss = p.anchor_log.loss;
  auto [prior, plog] = train_motion_prior(train, c, sk);
  r.prior_loss = plog.loss;
  auto [g, glog] = train_diffusion_model(train, p.upper, c, sk);
  r.denoiser_loss = glog.loss;
  r.models.upper = std::move(p.upper);
  r.models.anchor = std::move(p.anchor);
  r.models.prior = std::move(prior);
  r.models.denoiser = std::move(g);
  r.models.schedule = schedule_of(c);
  return r;
}

// ---------------------------------------------------------------------------
// 3. closed forms

Outcome closed_form_suite() {
  Outcome out;
  const auto s = make_schedule(50, 1e-4, 2e-2);
  Rng rng(400);
  const int samples = 100000;
  const Mat x0 = rng.normal(1, 4);
  bool mc_ok = true;
  double worst_sigma = 0.0;
  for (int t : {1, 10, 25, 50}) {
    const double a = std::sqrt(s.alpha_bar(t));
    const double sd = std::sqrt(1.0 - s.alpha_bar(t));
    RowVec mean = RowVec::Zero(4);
    RowVec sq = RowVec::Zero(4);
    for (int i = 0; i < samples; ++i) {
      const Mat x = q_sample(s, x0, t, rng.normal(1, 4));
      mean += x.row(0);
      sq += x.row(0).array().square().matrix();
    }
    mean /= samples;
    const RowVec var = (sq / samples).array() - mean.array().square();
    for (int c = 0; c < 4; ++c) {
      const double mean_sigma = std::abs(mean(c) - a * x0(0, c)) / (sd / std::sqrt(samples));
      // std of the sample std is about sd / sqrt(2n)
      const double std_sigma = std::abs(std::sqrt(var(c)) - sd) / (sd / std::sqrt(2.0 * samples));
      worst_sigma = std::max({worst_sigma, mean_sigma, std_sigma});
      mc_ok = mc_ok && mean_sigma < 3.0 && std_sigma < 3.0;
    }
  }
  out.check(mc_ok, "q_sample Monte Carlo mean/std: worst deviation " + fmt(worst_sigma, 3) + " sigma");

  Rng step_rng(401);
  const Mat xhat = step_rng.normal(16, kMotionDim);
  out.check(ddpm_step(s, xhat, 1, step_rng) == xhat, "ddpm_step at t=1 returns the x0 estimate exactly");

  RunConfig c = tiny_config();
  TinyRun run = tiny_run(c);
  const auto test = corpus_windows(run.corpus, c, true);
  SamplerOptions unguided = sampler_options(c);
  unguided.guided = false;
  SamplerOptions zero = sampler_options(c);
  zero.guidance.alpha = 0.0;
  zero.guidance.beta = 0.0;
  zero.guidance.eta = 0.0;
  bool equal = true;
  for (size_t i = 0; i < test.size(); ++i) {
    const auto& w = test[i];
    const Mat a = estimate_motion(w.signals, w.scene->cloud, run.models.view(), unguided, 77 + i).to_features();
    const Mat b = estimate_motion(w.signals, w.scene->cloud, run.models.view(), zero, 77 + i).to_features();
    equal = equal && a == b;
  }
  out.check(equal, "guidance no-op (alpha=beta=eta=0) bit-equals unguided on " + std::to_string(test.size()) + " windows");
  return out;
}

// ---------------------------------------------------------------------------
// 4. desk-scale trends

struct SeedResult {
  EvalSummary full;
  EvalSummary no_scene;
  EvalSummary no_pae;
  EvalSummary unguided;
  EvalSummary pen_only;
};

EvalSummary eval_variant(const TrainedModels& shared, const Denoiser& g, const std::vector<CorpusWindow>& test, const RunConfig& c, std::uint64_t seed) {
  SamplerModels v = shared.view();
  v.denoiser = &g;
  return evaluate_models(v, test, c, seed);
}

Outcome trend_suite(const RunConfig& base, const fs::path& work) {
  Outcome out;
  const Skeleton sk = Skeleton::standard();
  auto t0 = Clock::now();
  const SyntheticCorpus corpus = generate_synthetic_corpus(corpus_spec(base), base.seed);
  const auto train = canonical_windows(corpus_windows(corpus, base, false), sk);
  const auto test = limit_windows(corpus_windows(corpus, base, true), base.eval_max_windows);
  std::cerr << "[4] corpus: " << train.size() << " train windows, " << test.size() << " test windows\n";

  TrainedModels shared;
  PaePair paes = train_paes(train, base);
  std::cerr << "[4] PAEs trained (" << fmt(seconds_since(t0), 3) << " s)\n";
  auto [prior, plog] = train_motion_prior(train, base, sk);
  std::cerr << "[4] prior trained (" << fmt(seconds_since(t0), 3) << " s)\n";
  shared.upper = std::move(paes.upper);
  shared.anchor = std::move(paes.anchor);
  shared.prior = std::move(prior);
  shared.schedule = schedule_of(base);

  std::ofstream report(work / "trend_report.txt");
  report << "seed variant " << metric_header() << "\n";
  std::vector<SeedResult> results;
  for (std::uint64_t k = 0; k < 3; ++k) {
    RunConfig c = base;
    c.seed = base.seed + k;
    auto train_variant = [&](bool scene, bool pae) {
      RunConfig v = c;
      v.use_scene = scene;
      v.use_periodic = pae;
      return train_diffusion_model(train, shared.upper, v, sk).first;
    };
    const Denoiser full = train_variant(true, true);
    const Denoiser no_scene = train_variant(false, true);
    const Denoiser no_pae = train_variant(true, false);
    std::cerr << "[4] seed " << k << ": denoisers trained (" << fmt(seconds_since(t0), 3) << " s)\n";

    RunConfig pen_only = c;
    pen_only.guide_phase = false;
    RunConfig unguided = pen_only;
    unguided.guide_penetration = false;
    RunConfig ns = c;
    ns.use_scene = false;
    RunConfig np = c;
    np.use_periodic = false;

    SeedResult r;
    r.full = eval_variant(shared, full, test, c, k);
    r.no_scene = eval_variant(shared, no_scene, test, ns, k);
    r.no_pae = eval_variant(shared, no_pae, test, np, k);
    r.pen_only = eval_variant(shared, full, test, pen_only, k);
    r.unguided = eval_variant(shared, full, test, unguided, k);
    for (auto [name, e] : {std::pair<const char*, const EvalSummary*>{"full", &r.full}, {"no_scene", &r.no_scene},
                           {"no_pae", &r.no_pae}, {"pen_only", &r.pen_only}, {"unguided", &r.unguided}}) {
      report << k << ' ' << name << ' ' << metric_line(*e) << "\n";
      std::cerr << "[4] seed " << k << ' ' << name << ' ' << metric_line(*e) << "\n";
    }
    report.flush();
    results.push_back(r);
  }

  int a = 0;
  int b = 0;
  int c = 0;
  int d_within = 0;
  std::vector<double> d_rel;
  std::ostringstream da, db, dc, dd;
  for (const auto& r : results) {
    a += r.full.metrics.mpjpe < r.no_scene.metrics.mpjpe ? 1 : 0;
    da << ' ' << fmt(r.full.metrics.mpjpe) << " vs " << fmt(r.no_scene.metrics.mpjpe) << ';';
    const double reduction = r.unguided.penetration_loss > 0.0 ? 1.0 - r.pen_only.penetration_loss / r.unguided.penetration_loss : 0.0;
    b += reduction >= 0.3 ? 1 : 0;
    db << ' ' << fmt(100.0 * reduction, 3) << "%;";
    c += r.full.metrics.lower_pe < r.pen_only.metrics.lower_pe ? 1 : 0;
    dc << ' ' << fmt(r.full.metrics.lower_pe) << " vs " << fmt(r.pen_only.metrics.lower_pe) << ';';
    const double rel = r.full.metrics.mpjpe / r.no_pae.metrics.mpjpe - 1.0;
    d_rel.push_back(rel);
    d_within += rel <= 0.05 ? 1 : 0;
    dd << ' ' << fmt(100.0 * rel, 3) << "%;";
  }
  std::sort(d_rel.begin(), d_rel.end());
  out.check(a >= 2, "(a) scene-conditioned MPJPE below no-scene in " + std::to_string(a) + "/3 seeds:" + da.str());
  out.check(b >= 2, "(b) penetration guidance cuts mean penetration loss by >= 30% in " + std::to_string(b) + "/3 seeds:" + db.str());
  out.check(c >= 2, "(c) phase guidance lowers Lower PE vs penetration-only guidance in " + std::to_string(c) + "/3 seeds:" + dc.str());
  out.check(
      d_within >= 2 && d_rel[1] < 0.0,
      "(d) PAE conditioning MPJPE change within +5% in " + std::to_string(d_within) + "/3 seeds, median " + fmt(100.0 * d_rel[1], 3) +
          "%:" + dd.str());
  report << "\n";
  for (const auto& n : out.notes) {
    report << n << "\n";
  }
  std::cerr << "[4] done (" << fmt(seconds_since(t0), 3) << " s)\n";
  return out;
}

// ---------------------------------------------------------------------------
// 5. metric sanity

Outcome metric_suite() {
  Outcome out;
  const Skeleton sk = Skeleton::standard();
  Rng rng(500);
  const MotionSequence m = smooth_random_motion(rng, 20);
  const MetricRow same = evaluate_all(m, m, sk, 30.0);
  out.check(
      same.mpjre == 0.0 && same.mpjpe == 0.0 && same.mpjve == 0.0 && same.hand_pe == 0.0 && same.upper_pe == 0.0 &&
          same.lower_pe == 0.0,
      "comparative metrics are zero on identical inputs");
  MotionSequence still = m;
  still.root_translation = m.root_translation.row(0).replicate(20, 1);
  still.local_rotations = m.local_rotations.row(0).replicate(20, 1);
  const MetricRow st = evaluate_all(still, still, sk, 30.0);
  out.check(st.jitter == 0.0 && st.foot_skate == 0.0, "jitter and foot skate are zero on an identical static pair");

  MotionSequence shifted = m;
  shifted.root_translation.col(0).array() += 0.010;
  const double e = mpjpe(shifted, m, sk);
  out.check(std::abs(e - 10.0) <= 1e-6, "MPJPE of a uniform 10 mm shift = " + fmt(e, 12));

  MotionSequence quad = still;
  for (int f = 0; f < 20; ++f) {
    const double t = f / 30.0;
    quad.root_translation.row(f) += Eigen::RowVector3d(0.4 * t * t + 0.1 * t, -0.3 * t * t, 0.2 * t * t);
  }
  const double jit = jitter(quad, sk, 30.0);
  out.check(std::abs(jit) < 1e-6, "jitter of a quadratic trajectory = " + fmt(jit));

  MotionSequence pinned = still;
  pinned.root_translation.col(2).array() += 5.0;
  const double fs_lifted = foot_skate(pinned, sk, 30.0);
  const double fs_pinned = foot_skate(still, sk, 30.0, FootContactOptions{-5.0, 10.0, 0.3});
  out.check(fs_pinned == 0.0 && fs_lifted == 0.0, "foot skate of pinned feet = " + fmt(fs_pinned));
  return out;
}

// ---------------------------------------------------------------------------
// 6. reproducibility

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FUSEMOTION_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome reproducibility_suite(const fs::path& work) {
  Outcome out;
  const fs::path dir = work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const RunConfig tiny = tiny_config();
  io_detail::write_file_atomic(dir / "tiny.cfg", tiny.to_text());
  const std::string c = " --config " + (dir / "tiny.cfg").string();
  const std::string data = (dir / "data").string();
  const std::string models = (dir / "models").string();
  bool setup = run_cli("gen-data" + c + " --out " + data) == 0;
  setup = setup && run_cli("train-pae" + c + " --data " + data + " --out " + models) == 0;
  setup = setup && run_cli("train-prior" + c + " --data " + data + " --out " + models) == 0;
  setup = setup && run_cli("train-denoiser" + c + " --data " + data + " --out " + models) == 0;
  out.check(setup, "CLI corpus and training steps succeed");
  const std::string common = "sample" + c + " --models " + models + " --motion " + data + "/motions/seq_0000.motion --scene " + data +
                             "/scenes/scene_0000.scene --seed 7 --out ";
  const bool ran = run_cli(common + (dir / "a.motion").string()) == 0 && run_cli(common + (dir / "b.motion").string()) == 0;
  out.check(
      ran && io_detail::read_file(dir / "a.motion") == io_detail::read_file(dir / "b.motion"),
      "`sample --seed 7` twice writes byte-identical motion files");

  const TinyRun r1 = tiny_run(tiny);
  const TinyRun r2 = tiny_run(tiny);
  auto bit_equal = [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; };
  const bool same = bit_equal(r1.pae_loss.at(9), r2.pae_loss.at(9)) && bit_equal(r1.prior_loss.at(9), r2.prior_loss.at(9)) &&
                    bit_equal(r1.denoiser_loss.at(9), r2.denoiser_loss.at(9));
  out.check(
      same, "training loss at step 10 bit-identical across two seeded runs (PAE " + fmt(r1.pae_loss.at(9), 17) + ", prior " +
                fmt(r1.prior_loss.at(9), 17) + ", denoiser " + fmt(r1.denoiser_loss.at(9), 17) + ")");
  RunConfig other = tiny;
  other.seed = 1;
  const TinyRun r3 = tiny_run(other);
  out.check(!bit_equal(r1.denoiser_loss.at(9), r3.denoiser_loss.at(9)), "a different seed changes the step-10 loss");
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string config = std::string(FUSEMOTION_SOURCE_DIR) + "/configs/desk.cfg";
  std::string work = (fs::temp_directory_path() / ("fusemotion_acceptance_" + std::to_string(::getpid()))).string();
  std::vector<int> only;
  app.add_option("--config", config, "config for the trend run");
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  RunConfig desk;
  desk.apply_file(config);
  desk.validate();
  fs::create_directories(work);

  const std::vector<std::pair<int, std::string>> names{
      {1, "oracle equivalence"}, {2, "gradient suite"}, {3, "closed-form checks"},
      {4, "desk-scale trends"},  {5, "metric sanity"},  {6, "reproducibility"}};
  bool all = true;
  for (const auto& [id, name] : names) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
      continue;
    }
    const auto t = Clock::now();
    Outcome o;
    try {
      switch (id) {
        case 1: o = oracle_suite(); break;
        case 2: o = gradient_suite(); break;
        case 3: o = closed_form_suite(); break;
        case 4: o = trend_suite(desk, work); break;
        case 5: o = metric_suite(); break;
        default: o = reproducibility_suite(work); break;
      }
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t);
    bool timely = true;
    if (id == 1 && secs >= 60.0) {
      o.check(timely = false, "runtime under 1 min");
    } else if (id == 2 && secs >= 300.0) {
      o.check(timely = false, "runtime under 5 min");
    }
    std::cout << "CRITERION " << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << name << " (" << fmt(secs, 3) << " s)\n";
    for (const auto& n : o.notes) {
      std::cout << "    " << n << "\n";
    }
    std::cout.flush();
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
