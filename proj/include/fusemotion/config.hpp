#pragma once

#include "fusemotion/common.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fusemotion {

/// Every tunable of a run. Defaults are the full-size model and training
/// setup; configs/desk.cfg scales them down.
struct RunConfig {
  std::uint64_t seed = 0;

  // synthetic corpus
  int scenes = 30;
  int sequences = 300;
  int sequence_frames = 240;
  double obstacle_density_per_m2 = 0.05;
  double floor_half_extent_m = 4.0;
  double point_spacing_m = 0.08;
  double test_fraction = 0.3;
  double floor_range_m = 0.3;
  double max_crouch_m = 0.3;

  // windows
  int window_frames = 120;
  int window_stride_frames = 20;
  double fps = 30.0;

  // periodic autoencoder
  int pae_channels = 6;
  int pae_hidden = 32;
  int pae_kernel = 9;
  int pae_steps = 2000;
  double pae_coupling_weight = 1.0;

  // transformers
  int d_model = 256;
  int heads = 4;
  int ff_width = 512;
  int prior_layers = 9;
  int denoiser_layers = 8;
  int prior_latent = 256;

  // optimization
  int batch = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int prior_steps = 20000;
  int denoiser_steps = 20000;

  // diffusion
  int diffusion_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  double lambda_kl = 0.002;
  double lambda_recon = 1.0;
  double lambda_geometric = 0.5;
  double denoiser_lambda_geometric = 1.0;

  // scene
  double crop_size_m = 2.0;
  double crop_drop_m = 0.9;
  double scene_voxel_m = 0.1;
  int scene_hidden1 = 32;
  int scene_hidden2 = 64;
  int scene_feature_width = 256;

  // guidance
  double guidance_alpha = 0.1;
  double guidance_beta = 0.01;
  double guidance_eta = 1.0;
  double contact_radius_m = 0.02;
  int knn_k = 4;
  std::vector<int> contact_joints{7, 8, 4, 5};

  // component toggles
  bool use_prior = true;
  bool use_scene = true;
  bool use_periodic = true;
  bool guide_penetration = true;
  bool guide_phase = true;
  bool noise_prior = false;

  // evaluation
  double contact_height_m = 0.05;
  double contact_speed_mps = 0.3;
  int eval_max_windows = 0; // 0 keeps every test window

  using FieldRef = std::variant<std::uint64_t*, int*, double*, bool*, std::vector<int>*>;

  std::vector<std::pair<std::string, FieldRef>> fields() {
    return {
        {"seed", &seed},
        {"scenes", &scenes},
        {"sequences", &sequences},
        {"sequence_frames", &sequence_frames},
        {"obstacle_density_per_m2", &obstacle_density_per_m2},
        {"floor_half_extent_m", &floor_half_extent_m},
        {"point_spacing_m", &point_spacing_m},
        {"test_fraction", &test_fraction},
        {"floor_range_m", &floor_range_m},
        {"max_crouch_m", &max_crouch_m},
        {"window_frames", &window_frames},
        {"window_stride_frames", &window_stride_frames},
        {"fps", &fps},
        {"pae_channels", &pae_channels},
        {"pae_hidden", &pae_hidden},
        {"pae_kernel", &pae_kernel},
        {"pae_steps", &pae_steps},
        {"pae_coupling_weight", &pae_coupling_weight},
        {"d_model", &d_model},
        {"heads", &heads},
        {"ff_width", &ff_width},
        {"prior_layers", &prior_layers},
        {"denoiser_layers", &denoiser_layers},
        {"prior_latent", &prior_latent},
        {"batch", &batch},
        {"learning_rate", &learning_rate},
        {"weight_decay", &weight_decay},
        {"clip_norm", &clip_norm},
        {"prior_steps", &prior_steps},
        {"denoiser_steps", &denoiser_steps},
        {"diffusion_steps", &diffusion_steps},
        {"beta_start", &beta_start},
        {"beta_end", &beta_end},
        {"lambda_kl", &lambda_kl},
        {"lambda_recon", &lambda_recon},
        {"lambda_geometric", &lambda_geometric},
        {"denoiser_lambda_geometric", &denoiser_lambda_geometric},
        {"crop_size_m", &crop_size_m},
        {"crop_drop_m", &crop_drop_m},
        {"scene_voxel_m", &scene_voxel_m},
        {"scene_hidden1", &scene_hidden1},
        {"scene_hidden2", &scene_hidden2},
        {"scene_feature_width", &scene_feature_width},
        {"guidance_alpha", &guidance_alpha},
        {"guidance_beta", &guidance_beta},
        {"guidance_eta", &guidance_eta},
        {"contact_radius_m", &contact_radius_m},
        {"knn_k", &knn_k},
        {"contact_joints", &contact_joints},
        {"use_prior", &use_prior},
        {"use_scene", &use_scene},
        {"use_periodic", &use_periodic},
        {"guide_penetration", &guide_penetration},
        {"guide_phase", &guide_phase},
        {"noise_prior", &noise_prior},
        {"contact_height_m", &contact_height_m},
        {"contact_speed_mps", &contact_speed_mps},
        {"eval_max_windows", &eval_max_windows},
    };
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& [name, ref] : fields()) {
      if (name != key) {
        continue;
      }
      try {
        std::visit([&](auto* p) { assign(p, value); }, ref);
      } catch (const std::logic_error&) {
        throw UsageError("config: bad value '" + value + "' for '" + key + "'");
      }
      return;
    }
    throw UsageError("config: unknown key '" + key + "'");
  }

  /// key = value lines; '#' starts a comment.
  void apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = line.substr(0, line.find('#'));
      const auto eq = line.find('=');
      if (trim(line).empty()) {
        continue;
      }
      if (eq == std::string::npos) {
        throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
      }
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  void apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in.good()) {
      throw UsageError("cannot read config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_text(ss.str());
  }

  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    for (auto& [name, ref] : const_cast<RunConfig*>(this)->fields()) {
      out << name << " = ";
      std::visit([&](auto* p) { write(out, *p); }, ref);
      out << '\n';
    }
    return out.str();
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) {
        throw UsageError("config: " + what);
      }
    };
    need(scenes >= 1 && sequences >= 1, "scenes and sequences must be >= 1");
    need(sequence_frames >= window_frames, "sequence_frames must be >= window_frames");
    need(window_frames >= 8, "window_frames must be >= 8");
    need(window_stride_frames >= 1, "window_stride_frames must be >= 1");
    need(fps > 0.0, "fps must be > 0");
    need(pae_channels >= 1 && pae_hidden >= 1 && pae_kernel >= 1 && pae_kernel % 2 == 1, "pae sizes must be positive, kernel odd");
    need(d_model >= 2 && heads >= 1 && d_model % heads == 0, "d_model must be divisible by heads");
    need(ff_width >= 1 && prior_layers >= 0 && denoiser_layers >= 0 && prior_latent >= 1, "bad transformer sizes");
    need(batch >= 1 && learning_rate > 0.0 && weight_decay >= 0.0 && clip_norm >= 0.0, "bad optimizer settings");
    need(pae_steps >= 0 && prior_steps >= 0 && denoiser_steps >= 0, "step counts must be >= 0");
    need(diffusion_steps >= 1 && beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, "bad diffusion schedule");
    need(lambda_kl >= 0.0 && lambda_recon >= 0.0 && lambda_geometric >= 0.0 && denoiser_lambda_geometric >= 0.0, "loss weights must be >= 0");
    need(crop_size_m > 0.0 && scene_voxel_m >= 0.0, "crop size must be > 0 and voxel >= 0");
    need(scene_hidden1 >= 1 && scene_hidden2 >= 1 && scene_feature_width >= 1, "bad scene encoder sizes");
    need(guidance_alpha >= 0.0 && guidance_beta >= 0.0 && guidance_eta >= 0.0, "guidance weights must be >= 0");
    need(contact_radius_m > 0.0 && knn_k >= 1 && !contact_joints.empty(), "bad contact settings");
    for (int j : contact_joints) {
      need(j >= 0 && j < kNumJoints, "contact joint out of range");
    }
    need(contact_height_m >= 0.0 && contact_speed_mps >= 0.0, "bad foot contact thresholds");
    need(eval_max_windows >= 0, "eval_max_windows must be >= 0");
    need(test_fraction >= 0.0 && test_fraction < 1.0, "test_fraction must be in [0, 1)");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
      return "";
    }
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static void check_consumed(size_t used, const std::string& v) {
    if (used != v.size()) {
      throw std::invalid_argument(v);
    }
  }

  static void assign(std::uint64_t* p, const std::string& v) {
    size_t used = 0;
    *p = std::stoull(v, &used);
    check_consumed(used, v);
  }
  static void assign(int* p, const std::string& v) {
    size_t used = 0;
    *p = std::stoi(v, &used);
    check_consumed(used, v);
  }
  static void assign(double* p, const std::string& v) {
    size_t used = 0;
    *p = std::stod(v, &used);
    check_consumed(used, v);
  }
  static void assign(bool* p, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") {
      *p = true;
    } else if (v == "0" || v == "false" || v == "off") {
      *p = false;
    } else {
      throw std::invalid_argument(v);
    }
  }
  static void assign(std::vector<int>* p, const std::string& v) {
    std::vector<int> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
      int x = 0;
      assign(&x, trim(item));
      out.push_back(x);
    }
    *p = out;
  }

  static void write(std::ostream& o, std::uint64_t v) {
    o << v;
  }
  static void write(std::ostream& o, int v) {
    o << v;
  }
  static void write(std::ostream& o, double v) {
    o << v;
  }
  static void write(std::ostream& o, bool v) {
    o << (v ? 1 : 0);
  }
  static void write(std::ostream& o, const std::vector<int>& v) {
    for (size_t i = 0; i < v.size(); ++i) {
      o << (i ? "," : "") << v[i];
    }
  }
};

} // namespace fusemotion
