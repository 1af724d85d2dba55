#include "fusemotion/io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace fusemotion;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(scenes = 2
sequences = 6
sequence_frames = 40
window_frames = 16
window_stride_frames = 8
pae_steps = 3
pae_hidden = 4
d_model = 8
heads = 2
ff_width = 8
prior_layers = 1
denoiser_layers = 1
prior_latent = 4
scene_hidden1 = 4
scene_hidden2 = 4
scene_feature_width = 8
batch = 2
prior_steps = 3
denoiser_steps = 3
diffusion_steps = 5
)";

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / ("fusemotion_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = std::string(FUSEMOTION_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

/// Corpus plus all checkpoints under a fresh directory, built once.
class CliFixture : public ::testing::Test {
 protected:
  static fs::path root() {
    return fs::temp_directory_path() / ("fusemotion_cli_" + std::to_string(::getpid()));
  }
  static std::string cfg() {
    return (root() / "tiny.cfg").string();
  }
  static std::string data() {
    return (root() / "data").string();
  }
  static std::string models() {
    return (root() / "models").string();
  }

  static void TearDownTestSuite() {
    fs::remove_all(root());
  }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    std::ofstream(root() / "tiny.cfg") << kTinyConfig;
    const std::string c = " --config " + cfg();
    ASSERT_EQ(run("gen-data" + c + " --out " + data()).code, 0);
    ASSERT_EQ(run("train-pae" + c + " --data " + data() + " --out " + models()).code, 0);
    ASSERT_EQ(run("train-prior" + c + " --data " + data() + " --out " + models()).code, 0);
    ASSERT_EQ(run("train-denoiser" + c + " --data " + data() + " --out " + models()).code, 0);
  }

  static std::string sample_args(const std::string& out, int seed) {
    return "sample --config " + cfg() + " --models " + models() + " --motion " + data() + "/motions/seq_0000.motion --scene " +
           data() + "/scenes/scene_0000.scene --out " + out + " --seed " + std::to_string(seed);
  }
};

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) {
    out.push_back(l);
  }
  return out;
}

} // namespace

TEST_F(CliFixture, SampleSameSeedWritesIdenticalFiles) {
  const fs::path a = root() / "a.motion";
  const fs::path b = root() / "b.motion";
  const fs::path c = root() / "c.motion";
  ASSERT_EQ(run(sample_args(a.string(), 7)).code, 0);
  ASSERT_EQ(run(sample_args(b.string(), 7)).code, 0);
  ASSERT_EQ(run(sample_args(c.string(), 8)).code, 0);
  EXPECT_EQ(io_detail::read_file(a), io_detail::read_file(b));
  EXPECT_NE(io_detail::read_file(a), io_detail::read_file(c));
}

TEST_F(CliFixture, RunsLeaveReproducibilityRecords) {
  const fs::path out = root() / "rec.motion";
  ASSERT_EQ(run(sample_args(out.string(), 3)).code, 0);
  const std::string rec = io_detail::read_file(out.string() + ".record.txt");
  EXPECT_NE(rec.find("seed = 3"), std::string::npos);
  EXPECT_NE(rec.find("file prior.ckpt = "), std::string::npos);
  EXPECT_NE(rec.find("file rec.motion = " + file_hash(out)), std::string::npos);
  EXPECT_NE(rec.find("window_frames = 16"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(data()) / "run_record.txt"));
  EXPECT_TRUE(fs::exists(fs::path(models()) / "run_record_train-denoiser.txt"));
}

TEST_F(CliFixture, EvalOfIdenticalStaticMotionIsAllZero) {
  MotionFile m = load_motion_file(fs::path(data()) / "motions" / "seq_0000.motion");
  const int n = m.motion.frames();
  m.motion.root_translation = m.motion.root_translation.row(0).replicate(n, 1);
  m.motion.local_rotations = m.motion.local_rotations.row(0).replicate(n, 1);
  const fs::path p = root() / "static.motion";
  save_motion_file(p, m);
  const RunResult r = run("eval --pred " + p.string() + " --gt " + p.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto ls = lines(r.output);
  ASSERT_GE(ls.size(), 2u);
  std::istringstream row(ls[1]);
  int fields = 0;
  for (double v; row >> v; ++fields) {
    EXPECT_EQ(v, 0.0) << "column " << fields;
  }
  EXPECT_EQ(fields, 10);
}

TEST_F(CliFixture, AblateEmitsOneRowPerCombination) {
  const RunResult r =
      run("ablate --config " + cfg() + " --data " + data() + " --models " + models() + " --vary scene,pen,phase");
  ASSERT_EQ(r.code, 0) << r.output;
  int rows = 0;
  for (const auto& l : lines(r.output)) {
    rows += (!l.empty() && (l[0] == '0' || l[0] == '1')) ? 1 : 0;
  }
  EXPECT_EQ(rows, 8);
}

TEST_F(CliFixture, UnknownFlagIsUsageError) {
  EXPECT_EQ(run(sample_args((root() / "u.motion").string(), 1) + " --bogus").code, 1);
  EXPECT_EQ(run("no-such-command").code, 1);
  EXPECT_EQ(run("gen-data --out " + (root() / "x").string() + " --set no_such_key=1").code, 1);
}

TEST_F(CliFixture, MissingCheckpointIsCheckpointError) {
  const RunResult r = run(
      "sample --config " + cfg() + " --models " + (root() / "nowhere").string() + " --motion " + data() +
      "/motions/seq_0000.motion --scene " + data() + "/scenes/scene_0000.scene --out " + (root() / "m.motion").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("nowhere"), std::string::npos);
}

TEST_F(CliFixture, MissingDataIsDataError) {
  EXPECT_EQ(run("train-pae --config " + cfg() + " --data " + (root() / "nodata").string() + " --out " + models()).code, 2);
}

TEST_F(CliFixture, MismatchedConfigRefusesCheckpoint) {
  const RunResult r = run(sample_args((root() / "mm.motion").string(), 1) + " --set d_model=16");
  EXPECT_EQ(r.code, 3) << r.output;
}
