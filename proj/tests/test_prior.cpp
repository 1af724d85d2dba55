#include "fusemotion/motion_prior.hpp"

#include "test_utils.hpp"

#include <gtest/gtest.h>

using namespace fusemotion;

namespace {

PriorConfig tiny_prior(int window = 8) {
  PriorConfig c;
  c.window = window;
  c.d_model = 16;
  c.layers = 1;
  c.heads = 2;
  c.ff = 16;
  c.latent = 8;
  return c;
}

SparseSignals random_signals(Rng& rng, int frames) {
  return SparseSignals{rng.normal(frames, kSignalDim)};
}

} // namespace

TEST(KlDivergence, Examples) {
  EXPECT_EQ(kl_divergence(RowVec::Zero(5), RowVec::Zero(5)), 0.0);
  RowVec mu = RowVec::Zero(5);
  mu(2) = 1.0;
  EXPECT_DOUBLE_EQ(kl_divergence(mu, RowVec::Zero(5)), 0.5);
}

TEST(KlDivergence, MatchesClosedFormAndIsNonnegative) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const RowVec mu = rng.normal(1, 7);
    const RowVec lv = rng.normal(1, 7);
    double want = 0.0;
    for (int i = 0; i < 7; ++i) {
      want += 0.5 * (std::exp(lv(i)) + mu(i) * mu(i) - 1.0 - lv(i));
    }
    EXPECT_NEAR(kl_divergence(mu, lv), want, 1e-9);
    EXPECT_GE(kl_divergence(mu, lv), 0.0);
    ad::Tape tape;
    EXPECT_NEAR(kl_divergence(tape.constant(mu), tape.constant(lv)).scalar(), want, 1e-9);
  }
}

TEST(MotionPrior, EncodeShapesAndDeterminism) {
  Rng rng(2);
  PriorConfig cfg = tiny_prior();
  cfg.latent = 256;
  MotionPrior prior(cfg, rng);
  const MotionSequence m = fusemotion::testing::smooth_random_motion(rng, cfg.window);
  const SparseSignals p = random_signals(rng, cfg.window);
  const auto a = prior_encode(prior, m, p);
  EXPECT_EQ(a.mu.size(), 256);
  EXPECT_EQ(a.logvar.size(), 256);
  const auto b = prior_encode(prior, m, p);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.logvar, b.logvar);
}

TEST(MotionPrior, DefaultWidthsAndWeights) {
  const PriorConfig c;
  EXPECT_EQ(c.window, 120);
  EXPECT_EQ(c.d_model, 256);
  EXPECT_EQ(c.layers, 9);
  EXPECT_EQ(c.latent, 256);
  EXPECT_DOUBLE_EQ(c.lambda_kl, 0.002);
  EXPECT_DOUBLE_EQ(c.lambda_recon, 1.0);
  EXPECT_DOUBLE_EQ(c.lambda_geometric, 0.5);
}

TEST(MotionPrior, EncodeFiniteOverManySeeds) {
  Rng init(3);
  const PriorConfig cfg = tiny_prior();
  MotionPrior prior(cfg, init);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto r = prior_encode(prior, fusemotion::testing::random_motion(rng, cfg.window), random_signals(rng, cfg.window));
    ASSERT_TRUE(r.mu.allFinite() && r.logvar.allFinite()) << "seed " << seed;
  }
}

TEST(MotionPrior, EncodeRejectsWrongLength) {
  Rng rng(4);
  const PriorConfig cfg = tiny_prior();
  MotionPrior prior(cfg, rng);
  EXPECT_THROW(
      prior_encode(prior, fusemotion::testing::random_motion(rng, cfg.window + 1), random_signals(rng, cfg.window + 1)),
      ShapeError);
}

TEST(SampleInitialMotion, SeedContract) {
  Rng init(5);
  const PriorConfig cfg = tiny_prior();
  MotionPrior prior(cfg, init);
  const SparseSignals p = random_signals(init, cfg.window);
  Rng a(7);
  Rng b(7);
  Rng c(8);
  const MotionSequence ma = sample_initial_motion(prior, p, a);
  const MotionSequence mb = sample_initial_motion(prior, p, b);
  const MotionSequence mc = sample_initial_motion(prior, p, c);
  EXPECT_EQ(ma.frames(), cfg.window);
  EXPECT_EQ(ma.to_features().cols(), kMotionDim);
  EXPECT_EQ(ma.to_features(), mb.to_features());
  EXPECT_GT((ma.to_features() - mc.to_features()).cwiseAbs().maxCoeff(), 0.0);
}

namespace {

std::vector<MotionWindow> tiny_windows(Rng& rng, int window, int count) {
  const Skeleton sk = Skeleton::standard();
  std::vector<MotionWindow> out;
  for (int i = 0; i < count; ++i) {
    const MotionSequence m = fusemotion::testing::smooth_random_motion(rng, window);
    out.push_back(MotionWindow{m.to_features(), extract_sparse_signals(sk, m).values, forward_kinematics(sk, m).positions});
  }
  return out;
}

} // namespace

TEST(TrainPrior, OverfitsSingleBatchAndKlStaysFinite) {
  Rng rng(6);
  PriorConfig cfg = tiny_prior();
  cfg.d_model = 32;
  cfg.ff = 64;
  MotionPrior prior(cfg, rng);
  const auto corpus = tiny_windows(rng, cfg.window, 2);
  nn::TrainOptions opt;
  opt.steps = 1000;
  opt.batch = 2;
  opt.lr = 3e-3;
  opt.seed = 1;
  const auto r = train_prior(prior, corpus, Skeleton::standard(), opt);
  EXPECT_LT(r.reconstruction.back(), 0.2 * r.reconstruction.front());
  for (double kl : r.kl) {
    ASSERT_TRUE(std::isfinite(kl));
    ASSERT_GE(kl, 0.0);
  }
}

TEST(TrainPrior, SeededRunsAreBitIdentical) {
  auto run = [] {
    Rng rng(7);
    const PriorConfig cfg = tiny_prior();
    MotionPrior prior(cfg, rng);
    nn::TrainOptions opt;
    opt.steps = 10;
    opt.batch = 2;
    opt.seed = 4;
    return train_prior(prior, tiny_windows(rng, cfg.window, 4), Skeleton::standard(), opt).loss;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainPrior, DecodedRotationsAreOrthonormal) {
  Rng rng(8);
  const PriorConfig cfg = tiny_prior();
  MotionPrior prior(cfg, rng);
  const MotionSequence m = sample_initial_motion(prior, random_signals(rng, cfg.window), rng);
  for (int f = 0; f < m.frames(); ++f) {
    for (int j = 0; j < kNumJoints; ++j) {
      ASSERT_TRUE(is_rotation(rot6d_to_matrix(m.rotation6d(f, j)), 1e-5));
    }
  }
}

TEST(TrainPrior, EmptyCorpusIsDataError) {
  Rng rng(9);
  MotionPrior prior(tiny_prior(), rng);
  EXPECT_THROW(train_prior(prior, {}, Skeleton::standard(), {}), DataError);
}
