#include "fusemotion/pipeline.hpp"

#include <gtest/gtest.h>

using namespace fusemotion;

TEST(RunConfig, DefaultsMatchFullScaleSetup) {
  const RunConfig c;
  EXPECT_EQ(c.window_frames, 120);
  EXPECT_EQ(c.pae_channels, 6);
  EXPECT_EQ(c.d_model, 256);
  EXPECT_EQ(c.prior_layers, 9);
  EXPECT_EQ(c.denoiser_layers, 8);
  EXPECT_EQ(c.batch, 64);
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.diffusion_steps, 50);
  EXPECT_EQ(c.guidance_alpha, 0.1);
  EXPECT_EQ(c.guidance_beta, 0.01);
  EXPECT_EQ(c.guidance_eta, 1.0);
  EXPECT_EQ(c.contact_radius_m, 0.02);
  EXPECT_EQ(c.knn_k, 4);
  EXPECT_EQ(c.crop_size_m, 2.0);
  EXPECT_EQ(c.lambda_kl, 0.002);
  EXPECT_EQ(c.lambda_recon, 1.0);
  EXPECT_EQ(c.lambda_geometric, 0.5);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  c.seed = 123456789012345ull;
  c.learning_rate = 3.0e-4 / 7.0;
  c.contact_joints = {7, 8};
  c.use_scene = false;
  RunConfig back;
  back.apply_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_EQ(back.contact_joints, c.contact_joints);
  EXPECT_FALSE(back.use_scene);
}

TEST(RunConfig, ParsingErrorsAreUsageErrors) {
  RunConfig c;
  EXPECT_THROW(c.set("no_such_key", "1"), UsageError);
  EXPECT_THROW(c.set("batch", "ten"), UsageError);
  EXPECT_THROW(c.set("batch", "10x"), UsageError);
  EXPECT_THROW(c.set("use_scene", "maybe"), UsageError);
  EXPECT_THROW(c.apply_text("batch 10"), UsageError);
  EXPECT_NO_THROW(c.apply_text("# comment\n\n batch = 10  # trailing\n"));
  EXPECT_EQ(c.batch, 10);
}

TEST(RunConfig, ValidationRejectsOutOfRange) {
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), UsageError);
  };
  bad([](RunConfig& c) { c.d_model = 30; });
  bad([](RunConfig& c) { c.beta_end = 1.5; });
  bad([](RunConfig& c) { c.guidance_eta = -1.0; });
  bad([](RunConfig& c) { c.contact_joints = {22}; });
  bad([](RunConfig& c) { c.sequence_frames = 100; });
  bad([](RunConfig& c) { c.pae_kernel = 4; });
}

TEST(Pipeline, ConfigTranslationCarriesFields) {
  RunConfig c;
  c.use_periodic = false;
  c.guide_phase = false;
  c.crop_size_m = 3.0;
  EXPECT_FALSE(denoiser_config(c).use_periodic);
  EXPECT_EQ(sampler_options(c).guidance.beta, 0.0);
  EXPECT_EQ(sampler_options(c).guidance.alpha, 0.1);
  EXPECT_TRUE(sampler_options(c).guided);
  EXPECT_EQ(crop_options(c).half_extent_m, 1.5);
  c.guide_penetration = false;
  EXPECT_FALSE(sampler_options(c).guided);
}

TEST(Pipeline, ToggleGridCoversEveryCombination) {
  const RunConfig c;
  EXPECT_EQ(toggle_grid({}, c).size(), 1u);
  const auto g = toggle_grid({"scene", "pen", "phase"}, c);
  ASSERT_EQ(g.size(), 8u);
  std::set<std::tuple<bool, bool, bool>> seen;
  for (const auto& t : g) {
    EXPECT_TRUE(t.prior);
    EXPECT_TRUE(t.periodic);
    seen.insert({t.scene, t.penetration, t.phase});
  }
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_THROW(toggle_grid({"bogus"}, c), UsageError);
}

TEST(Pipeline, WindowsAreCanonicalAndConsistent) {
  RunConfig c;
  c.scenes = 2;
  c.sequences = 6;
  c.sequence_frames = 40;
  c.window_frames = 16;
  c.window_stride_frames = 8;
  const auto corpus = generate_synthetic_corpus(corpus_spec(c), 3);
  const auto train = corpus_windows(corpus, c, false);
  const auto test = corpus_windows(corpus, c, true);
  EXPECT_EQ(train.size(), 4u * 4u); // starts 0, 8, 16, 24
  EXPECT_EQ(test.size(), 2u * 2u);  // starts 0, 16
  const Skeleton sk = Skeleton::standard();
  for (const auto& w : train) {
    const CanonicalWindow cw = canonicalize(w, sk);
    const Vec3 head = cw.motion.signals.block<1, 3>(0, signal_layout::position(0)).transpose();
    EXPECT_NEAR(head.x(), 0.0, 1e-12);
    EXPECT_NEAR(head.y(), 0.0, 1e-12);
    EXPECT_NEAR(head.z(), w.signals.values(0, signal_layout::position(0) + 2), 1e-12);
    const MotionSequence m = MotionSequence::from_features(cw.motion.features, c.fps);
    EXPECT_LT((extract_sparse_signals(sk, m).values - cw.motion.signals).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((forward_kinematics(sk, m).positions - cw.motion.positions).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Pipeline, LimitWindowsSpreadsEvenly) {
  std::vector<CorpusWindow> ws(10);
  for (int i = 0; i < 10; ++i) {
    ws[static_cast<size_t>(i)].start = i;
  }
  const auto sub = limit_windows(ws, 5);
  ASSERT_EQ(sub.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(sub[static_cast<size_t>(i)].start, 2 * i);
  }
  EXPECT_EQ(limit_windows(ws, 0).size(), 10u);
  EXPECT_EQ(limit_windows(ws, 20).size(), 10u);
}

TEST(Pipeline, PenetrationCountMatchesBruteForce) {
  Rng rng(4);
  MotionSequence m;
  m.root_translation = Eigen::MatrixX3d::Zero(3, 3);
  m.local_rotations = Mat(3, kNumJoints * 6);
  for (int f = 0; f < 3; ++f) {
    for (int j = 0; j < kNumJoints; ++j) {
      m.set_rotation6d(f, j, (Vec6() << 1, 0, 0, 0, 1, 0).finished());
    }
  }
  const Skeleton sk = Skeleton::standard();
  const Mat p = forward_kinematics(sk, m).positions;
  GuidanceConfig g;
  Eigen::MatrixX3d pts(2, 3);
  pts.row(0) = p.block<1, 3>(0, 3 * joints::kLeftAnkle) + Eigen::RowVector3d(0.01, 0, 0);
  pts.row(1) = Eigen::RowVector3d(50, 50, 50);
  // Same pose in all 3 frames: the left ankle is inside the radius each frame.
  EXPECT_EQ(penetration_count(m, sk, KdTree(pts), g), 3);
  pts.row(0) = p.block<1, 3>(0, 3 * joints::kLeftAnkle) + Eigen::RowVector3d(0.03, 0, 0);
  EXPECT_EQ(penetration_count(m, sk, KdTree(pts), g), 0);
}
