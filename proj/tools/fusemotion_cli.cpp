#include "fusemotion/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

using namespace fusemotion;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheckpoint = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--seed", c.seed, "seed (overrides the config)");
  cmd->add_option("--set", c.overrides, "extra key=value override, repeatable");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    cfg.apply_file(c.config);
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) {
    cfg.seed = *c.seed;
  }
  cfg.validate();
  return cfg;
}

/// Config, seed and content hashes of every file a run read or wrote.
void write_record(
    const fs::path& path, const std::string& command, const RunConfig& cfg, const std::vector<fs::path>& files) {
  std::ostringstream o;
  o << "fusemotion-run-record\n";
  o << "command = " << command << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "config_hash = " << hex64(fnv1a(cfg.to_text())) << "\n";
  for (const auto& f : files) {
    if (fs::is_regular_file(f)) {
      o << "file " << f.filename().string() << " = " << file_hash(f) << "\n";
    }
  }
  o << "\n[config]\n" << cfg.to_text();
  if (!path.parent_path().empty()) {
    fs::create_directories(path.parent_path());
  }
  io_detail::write_file_atomic(path, o.str());
}

void progress(const std::string& stage, const std::vector<double>& loss) {
  report(
      [](const std::string& s, int step, double l) { std::cerr << s << " step " << step << " loss " << l << "\n"; }, stage,
      loss);
}

std::vector<CanonicalWindow> load_train(const fs::path& data, const RunConfig& cfg, SyntheticCorpus& corpus) {
  corpus = load_corpus(data);
  return canonical_windows(corpus_windows(corpus, cfg, false), Skeleton::standard());
}

std::vector<fs::path> model_paths(const fs::path& dir, const RunConfig& cfg) {
  return {model_files::upper_pae(dir), model_files::anchor_pae(dir), model_files::prior(dir),
          model_files::denoiser(dir, cfg.use_scene, cfg.use_periodic)};
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) {
    throw DataError(std::string(what) + " directory not found: " + p.string());
  }
}

void print_eval(const EvalSummary& e) {
  std::cout << metric_header() << "\n" << metric_line(e) << "\n";
  std::cout << "penetration: windows=" << e.windows << " mean_loss=" << e.penetration_loss
            << " mean_contact_joint_frames_inside_radius=" << e.penetration_count << "\n";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusemotion: scene-aware full-body motion from sparse trackers"};
  app.require_subcommand(1);
  Common common;
  std::string data_dir;
  std::string models_dir;
  std::string out;
  std::string motion_in;
  std::string scene_in;
  std::string pred_in;
  std::string gt_in;
  std::string vary = "prior,scene,pae";

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(gen, common);
  gen->add_option("--out", out, "output directory")->required();

  auto* tpae = app.add_subcommand("train-pae", "train the upper and anchor periodic autoencoders");
  add_common(tpae, common);
  tpae->add_option("--data", data_dir, "corpus directory")->required();
  tpae->add_option("--out", out, "model directory")->required();

  auto* tprior = app.add_subcommand("train-prior", "train the motion prior");
  add_common(tprior, common);
  tprior->add_option("--data", data_dir, "corpus directory")->required();
  tprior->add_option("--out", out, "model directory")->required();

  auto* tden = app.add_subcommand("train-denoiser", "train the denoiser (needs the upper PAE in --out)");
  add_common(tden, common);
  tden->add_option("--data", data_dir, "corpus directory")->required();
  tden->add_option("--out", out, "model directory")->required();

  auto* sample = app.add_subcommand("sample", "estimate full-body motion from the trackers of a motion file");
  add_common(sample, common);
  sample->add_option("--models", models_dir, "model directory")->required();
  sample->add_option("--motion", motion_in, "motion file providing the tracker signals")->required();
  sample->add_option("--scene", scene_in, "scene file")->required();
  sample->add_option("--out", out, "output motion file")->required();

  auto* eval = app.add_subcommand("eval", "metric table for a prediction or for the test split");
  add_common(eval, common);
  eval->add_option("--pred", pred_in, "predicted motion file");
  eval->add_option("--gt", gt_in, "ground-truth motion file");
  eval->add_option("--scene", scene_in, "scene file for the penetration summary");
  eval->add_option("--models", models_dir, "model directory (test split mode)");
  eval->add_option("--data", data_dir, "corpus directory (test split mode)");
  eval->add_option("--out", out, "directory for the run record");

  auto* ablate = app.add_subcommand("ablate", "one metric row per toggle combination");
  add_common(ablate, common);
  ablate->add_option("--data", data_dir, "corpus directory")->required();
  ablate->add_option("--models", models_dir, "model directory; missing denoiser variants are trained and saved")
      ->required();
  ablate->add_option("--vary", vary, "comma list from prior,scene,pae,pen,phase");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = resolve(common);
    const Skeleton sk = Skeleton::standard();

    if (command == "gen-data") {
      const auto corpus = generate_synthetic_corpus(corpus_spec(cfg), cfg.seed);
      save_corpus(out, corpus);
      write_record(fs::path(out) / "run_record.txt", command, cfg, {fs::path(out) / "split.txt"});
      std::cout << "wrote " << corpus.sequences.size() << " sequences and " << corpus.scenes.size() << " scenes to " << out
                << "\n";
      return 0;
    }

    if (command == "train-pae" || command == "train-prior" || command == "train-denoiser") {
      require_dir(data_dir, "corpus");
      SyntheticCorpus corpus;
      const auto train = load_train(data_dir, cfg, corpus);
      fs::create_directories(out);
      std::vector<fs::path> files{fs::path(data_dir) / "split.txt"};
      if (command == "train-pae") {
        const PaePair p = train_paes(train, cfg);
        progress("upper_pae", p.upper_log.loss);
        progress("anchor_pae", p.anchor_log.loss);
        save_paes(out, p);
        files.push_back(model_files::upper_pae(out));
        files.push_back(model_files::anchor_pae(out));
      } else if (command == "train-prior") {
        auto [prior, log] = train_motion_prior(train, cfg, sk);
        progress("prior", log.loss);
        save_prior(model_files::prior(out), prior);
        files.push_back(model_files::prior(out));
      } else {
        const PeriodicAutoencoder upper = load_pae(model_files::upper_pae(out), pae_config(cfg), "upper_pae");
        auto [g, log] = train_diffusion_model(train, upper, cfg, sk);
        progress("denoiser", log.loss);
        const fs::path path = model_files::denoiser(out, cfg.use_scene, cfg.use_periodic);
        save_denoiser(path, g);
        files.push_back(model_files::upper_pae(out));
        files.push_back(path);
      }
      write_record(fs::path(out) / ("run_record_" + command + ".txt"), command, cfg, files);
      return 0;
    }

    if (command == "sample") {
      const TrainedModels m = load_models(models_dir, cfg);
      const MotionFile src = load_motion_file(motion_in);
      const SceneFile scene = load_scene_file(scene_in);
      const SparseSignals signals = extract_sparse_signals(src.skeleton, src.motion);
      MotionFile result;
      result.skeleton = m.skeleton;
      result.motion = estimate_long_sequence(signals, scene.cloud, m.view(), sampler_options(cfg), cfg.seed);
      save_motion_file(out, result);
      auto files = model_paths(models_dir, cfg);
      files.insert(files.end(), {fs::path(motion_in), fs::path(scene_in), fs::path(out)});
      write_record(fs::path(out).string() + ".record.txt", command, cfg, files);
      std::cout << "wrote " << result.motion.frames() << " frames to " << out << "\n";
      return 0;
    }

    if (command == "eval") {
      EvalSummary summary;
      std::vector<fs::path> files;
      if (!pred_in.empty() || !gt_in.empty()) {
        if (pred_in.empty() || gt_in.empty()) {
          throw UsageError("eval needs both --pred and --gt");
        }
        const MotionFile pred = load_motion_file(pred_in);
        const MotionFile gt = load_motion_file(gt_in);
        SceneFile scene;
        if (!scene_in.empty()) {
          scene = load_scene_file(scene_in);
        } else {
          scene.cloud.points = Eigen::MatrixX3d::Constant(1, 3, 1e6); // far away: no contacts
        }
        const KdTree tree(scene.cloud.points);
        EvalSummary acc;
        score(acc, pred.motion, gt.motion, scene, tree, gt.skeleton, cfg);
        summary = finish(acc);
        files = {pred_in, gt_in};
        if (!scene_in.empty()) {
          files.push_back(scene_in);
        }
      } else {
        if (models_dir.empty() || data_dir.empty()) {
          throw UsageError("eval needs --pred/--gt or --models/--data");
        }
        require_dir(data_dir, "corpus");
        const SyntheticCorpus corpus = load_corpus(data_dir);
        const TrainedModels m = load_models(models_dir, cfg);
        const auto test = limit_windows(corpus_windows(corpus, cfg, true), cfg.eval_max_windows);
        summary = evaluate_models(m.view(), test, cfg, cfg.seed);
        files = model_paths(models_dir, cfg);
      }
      print_eval(summary);
      if (!out.empty()) {
        write_record(fs::path(out) / "run_record_eval.txt", command, cfg, files);
      }
      return 0;
    }

    if (command == "ablate") {
      std::vector<std::string> names;
      std::stringstream ss(vary);
      for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) {
          names.push_back(item);
        }
      }
      const auto grid = toggle_grid(names, cfg);
      require_dir(data_dir, "corpus");
      SyntheticCorpus corpus;
      const auto train = load_train(data_dir, cfg, corpus);
      const auto test = limit_windows(corpus_windows(corpus, cfg, true), cfg.eval_max_windows);
      std::vector<fs::path> files;
      std::cout << toggle_header() << " " << metric_header() << "\n";
      for (const Toggles& t : grid) {
        const RunConfig v = t.apply(cfg);
        const fs::path dpath = model_files::denoiser(models_dir, v.use_scene, v.use_periodic);
        if (!fs::exists(dpath)) {
          const PeriodicAutoencoder upper = load_pae(model_files::upper_pae(models_dir), pae_config(v), "upper_pae");
          auto [g, log] = train_diffusion_model(train, upper, v, sk);
          progress(dpath.filename().string(), log.loss);
          save_denoiser(dpath, g);
        }
        const TrainedModels m = load_models(models_dir, v);
        const EvalSummary e = evaluate_models(m.view(), test, v, cfg.seed);
        std::cout << toggle_line(t) << " " << metric_line(e) << std::endl;
        for (const auto& f : model_paths(models_dir, v)) {
          if (std::find(files.begin(), files.end(), f) == files.end()) {
            files.push_back(f);
          }
        }
      }
      write_record(fs::path(models_dir) / "run_record_ablate.txt", command + " --vary " + vary, cfg, files);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
