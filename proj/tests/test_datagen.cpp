#include "fusemotion/datagen.hpp"
#include "fusemotion/guidance.hpp"

#include <gtest/gtest.h>

#include <complex>

using namespace fusemotion;

namespace {

CorpusSpec small_spec() {
  CorpusSpec s;
  s.scenes = 3;
  s.sequences = 10;
  s.frames = 150;
  return s;
}

/// Forward offset of a joint from the pelvis, in the pelvis heading frame.
std::vector<double> forward_offset(const MotionSequence& m, const Skeleton& sk, int joint) {
  const FkState fk = forward_kinematics_state(sk, m.to_features());
  std::vector<double> out;
  for (int f = 0; f < m.frames(); ++f) {
    const Vec3 fwd = fk.world_rotation(f, joints::kPelvis).col(0);
    const Vec3 d = (fk.positions.block<1, 3>(f, 3 * joint) - fk.positions.block<1, 3>(f, 0)).transpose();
    out.push_back(d.dot(fwd));
  }
  return out;
}

std::complex<double> dft_at(const std::vector<double>& x, double hz, double fps) {
  double mean = 0.0;
  for (double v : x) {
    mean += v / static_cast<double>(x.size());
  }
  std::complex<double> acc = 0.0;
  for (size_t t = 0; t < x.size(); ++t) {
    acc += (x[t] - mean) * std::exp(std::complex<double>(0.0, -2.0 * kPi * hz * static_cast<double>(t) / fps));
  }
  return acc;
}

} // namespace

TEST(Datagen, SeedFixedRunIsBitIdentical) {
  const auto a = generate_synthetic_corpus(small_spec(), 5);
  const auto b = generate_synthetic_corpus(small_spec(), 5);
  ASSERT_EQ(a.sequences.size(), b.sequences.size());
  for (size_t i = 0; i < a.sequences.size(); ++i) {
    EXPECT_EQ(encode_motion_file(a.sequences[i].motion), encode_motion_file(b.sequences[i].motion));
    EXPECT_EQ(a.sequences[i].test, b.sequences[i].test);
  }
  for (size_t i = 0; i < a.scenes.size(); ++i) {
    EXPECT_EQ(encode_scene_file(a.scenes[i].file), encode_scene_file(b.scenes[i].file));
  }
  const auto c = generate_synthetic_corpus(small_spec(), 6);
  EXPECT_NE(encode_motion_file(a.sequences[0].motion), encode_motion_file(c.sequences[0].motion));
}

TEST(Datagen, SplitIsSeventyThirty) {
  CorpusSpec s = small_spec();
  s.sequences = 20;
  const auto corpus = generate_synthetic_corpus(s, 1);
  int test = 0;
  for (const auto& q : corpus.sequences) {
    test += q.test ? 1 : 0;
  }
  EXPECT_EQ(test, 6);
}

TEST(Datagen, WalkersHaveZeroPenetration) {
  const auto corpus = generate_synthetic_corpus(small_spec(), 2);
  GuidanceConfig cfg;
  for (const auto& s : corpus.sequences) {
    const auto& scene = corpus.scenes[static_cast<size_t>(s.scene)].file;
    EXPECT_EQ(penetration_loss(s.motion.motion, s.motion.skeleton, scene.cloud, cfg), 0.0) << s.name;
  }
}

TEST(Datagen, FeetRestOnTheFloor) {
  const auto corpus = generate_synthetic_corpus(small_spec(), 3);
  for (const auto& s : corpus.sequences) {
    const double floor = corpus.scenes[static_cast<size_t>(s.scene)].file.floor_height;
    const Mat p = forward_kinematics(s.motion.skeleton, s.motion.motion).positions;
    for (int f = 0; f < p.rows(); ++f) {
      const double low = std::min(p(f, 3 * joints::kLeftAnkle + 2), p(f, 3 * joints::kRightAnkle + 2));
      ASSERT_NEAR(low - floor, 0.08, 1e-5);
    }
  }
}

TEST(Datagen, ArmsAndLegsSwingInAntiphase) {
  const auto corpus = generate_synthetic_corpus(small_spec(), 4);
  for (const auto& s : corpus.sequences) {
    const MotionSequence& m = s.motion.motion;
    const auto wrist = forward_offset(m, s.motion.skeleton, joints::kLeftWrist);
    const auto ankle = forward_offset(m, s.motion.skeleton, joints::kLeftAnkle);
    // Strongest spectral line of the leg swing, found by a fine scan.
    double best_hz = 0.0;
    double best = -1.0;
    for (double hz = 0.3; hz <= 2.0; hz += 0.005) {
      const double p = std::abs(dft_at(ankle, hz, m.fps));
      if (p > best) {
        best = p;
        best_hz = hz;
      }
    }
    EXPECT_NEAR(best_hz, s.params.gait_hz, 0.1) << s.name;
    const double dphi = std::arg(dft_at(wrist, best_hz, m.fps) / dft_at(ankle, best_hz, m.fps)) / (2.0 * kPi);
    EXPECT_NEAR(std::abs(dphi), 0.5, 0.05) << s.name;
  }
}

TEST(Datagen, SaveLoadRoundTrip) {
  const auto corpus = generate_synthetic_corpus(small_spec(), 7);
  const auto dir = std::filesystem::temp_directory_path() / "fusemotion_datagen_test";
  std::filesystem::remove_all(dir);
  save_corpus(dir, corpus);
  const auto back = load_corpus(dir);
  ASSERT_EQ(back.sequences.size(), corpus.sequences.size());
  for (size_t i = 0; i < back.sequences.size(); ++i) {
    EXPECT_EQ(back.sequences[i].name, corpus.sequences[i].name);
    EXPECT_EQ(back.sequences[i].test, corpus.sequences[i].test);
    EXPECT_EQ(back.sequences[i].motion.motion.to_features(), corpus.sequences[i].motion.motion.to_features());
    EXPECT_EQ(
        back.scenes[static_cast<size_t>(back.sequences[i].scene)].file.cloud.points,
        corpus.scenes[static_cast<size_t>(corpus.sequences[i].scene)].file.cloud.points);
  }
}

TEST(Datagen, InvalidSpecRejected) {
  CorpusSpec s = small_spec();
  s.sequences = 0;
  EXPECT_THROW(generate_synthetic_corpus(s, 0), ValidationError);
  s = small_spec();
  s.test_fraction = 1.0;
  EXPECT_THROW(generate_synthetic_corpus(s, 0), ValidationError);
}
