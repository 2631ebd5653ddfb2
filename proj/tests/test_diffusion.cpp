#include "gesturegen/diffusion/ddim.hpp"
#include "gesturegen/diffusion/train.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gesturegen;
using namespace gesturegen::diffusion;
using nn::Graph;
using nn::Matrix;
using nn::Var;

namespace {

RowMatrix gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  RowMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

DenoiserConfig tiny_denoiser() {
  DenoiserConfig c;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.heads = 2;
  c.width = 8;
  c.ff_hidden = 16;
  c.latent_tokens = 1;
  c.latent_dim = 6;
  c.max_segments = 4;
  return c;
}

conditioning::ConditionSet caption_audio_set(int segments, bool with_audio, bool with_locals) {
  conditioning::HashTextEncoder text;
  conditioning::ConditionSet cs;
  cs.segments = captioning::segment_regular(60 * segments, 60);
  if (with_locals) {
    for (int i = 0; i < segments; ++i) cs.local_captions.emplace_back(conditioning::embed_text("part " + std::to_string(i), text));
  }
  cs.global_caption = conditioning::embed_text("a person waves", text);
  if (with_audio) {
    cs.audio = conditioning::silent_audio(60 * segments);
    cs.audio->frames.col(0).setLinSpaced(0.0, 1.0);
  }
  return cs;
}

/// Exact noise prediction when z0 ~ N(m, s^2 I) independently per entry.
struct GaussianOracle {
  RowMatrix m;
  double s;
  const NoiseSchedule* schedule;

  RowMatrix operator()(const RowMatrix& z, int t) const {
    const double ab = schedule->abar(t);
    const double c = std::sqrt(1 - ab) / (ab * s * s + 1 - ab);
    return c * (z - std::sqrt(ab) * m);
  }
};

/// DDIM with eta = 0 under the oracle is affine per entry: z' = P z + Q m.
/// Accumulates the coefficients step by step from the schedule alone.
RowMatrix affine_ddim(const RowMatrix& zT, const RowMatrix& m, double s, const NoiseSchedule& sch, const std::vector<int>& steps) {
  double A = 1, B = 0;  // z = A zT + B m
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double ab = sch.abar(steps[i]);
    const double abp = i + 1 < steps.size() ? sch.abar(steps[i + 1]) : 1.0;
    const double c = std::sqrt(1 - ab) / (ab * s * s + 1 - ab);
    const double P = std::sqrt(abp / ab) * (1 - std::sqrt(1 - ab) * c) + std::sqrt(1 - abp) * c;
    const double Q = std::sqrt(abp) * std::sqrt(1 - ab) * c - std::sqrt(1 - abp) * c * std::sqrt(ab);
    A = P * A;
    B = P * B + Q;
  }
  return A * zT + B * m;
}

}  // namespace

TEST(NoiseSchedule, PublishedEndpointsAndSanity) {
  const NoiseSchedule s;
  ASSERT_EQ(s.steps(), 1000);
  EXPECT_DOUBLE_EQ(s.beta.front(), 8.5e-4);
  EXPECT_NEAR(s.beta.back(), 0.012, 1e-15);
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    EXPECT_GT(s.beta[i], 0.0);
    if (t > 1) {
      EXPECT_GE(s.beta[i], s.beta[i - 1]);
      EXPECT_LT(s.alpha_bar[i], s.alpha_bar[i - 1]);
    }
    prod *= 1.0 - s.beta[i];
    EXPECT_NEAR(s.abar(t), prod, 1e-12);
  }
  EXPECT_GT(s.abar(1000), 0.0);
  EXPECT_LT(s.abar(1), 1.0);
  EXPECT_LT(std::sqrt(s.abar(1000)), 0.05);
  EXPECT_EQ(s.abar(0), 1.0);
  EXPECT_THROW(s.check_step(1001), std::out_of_range);
  EXPECT_THROW(s.check_step(-1), std::out_of_range);
}

TEST(NoiseSchedule, HashTracksBetas) {
  EXPECT_EQ(NoiseSchedule().hash(), NoiseSchedule().hash());
  EXPECT_NE(NoiseSchedule().hash(), NoiseSchedule({1000, 1e-4, 0.02}).hash());
  EXPECT_THROW(NoiseSchedule({1000, 0.0, 0.01}), std::invalid_argument);
}

TEST(QSample, ClosedFormAndRange) {
  const NoiseSchedule s;
  std::mt19937_64 rng(1);
  const RowMatrix z0 = gaussian(1, 8, rng);
  const RowMatrix eps = gaussian(1, 8, rng);
  const RowMatrix z = q_sample(z0, 10, eps, s);
  EXPECT_TRUE(z.isApprox(std::sqrt(s.abar(10)) * z0 + std::sqrt(1 - s.abar(10)) * eps));
  EXPECT_LT((q_sample(z0, 1, RowMatrix::Zero(1, 8), s) - z0).norm(), 1e-3 * z0.norm());
  EXPECT_THROW(q_sample(z0, 0, eps, s), std::out_of_range);
  EXPECT_THROW(q_sample(z0, 1001, eps, s), std::out_of_range);
}

TEST(QSample, MatchesStepwiseChainInDistribution) {
  const NoiseSchedule s;
  const RowMatrix z0 = (RowMatrix(1, 8) << 1.5, -0.5, 0.25, 2.0, -1.0, 0.0, 0.75, -2.0).finished();
  std::mt19937_64 rng(5);
  const int n = 10000;
  for (int t : {1, 100}) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(8), sq = Eigen::RowVectorXd::Zero(8);
    for (int k = 0; k < n; ++k) {
      RowMatrix z = z0;
      for (int step = 1; step <= t; ++step) z = q_step(z, step, s, rng);
      sum += z.row(0);
      sq += z.row(0).array().square().matrix();
    }
    const double ab = s.abar(t);
    for (int j = 0; j < 8; ++j) {
      const double mean = sum(j) / n;
      const double var = sq(j) / n - mean * mean;
      const double v = 1 - ab;
      EXPECT_NEAR(mean, std::sqrt(ab) * z0(0, j), 3 * std::sqrt(v / n)) << "t=" << t;
      EXPECT_NEAR(var, v, 3 * v * std::sqrt(2.0 / (n - 1))) << "t=" << t;
    }
  }
}

TEST(CfgCombine, DegenerateIdentitiesAreExact) {
  std::mt19937_64 rng(2);
  const RowMatrix a = gaussian(1, 5, rng), c = gaussian(1, 5, rng), u = gaussian(1, 5, rng);
  EXPECT_EQ(cfg_combine(a, c, u, {1.0, 0.0}), a);
  EXPECT_EQ(cfg_combine(a, c, u, {0.0, 0.0}), u);
  EXPECT_EQ(cfg_combine(a, c, u, {0.0, 1.0}), c);
  const RowMatrix expected = 7.0 * a + 0.75 * c - 6.75 * u;
  EXPECT_TRUE(cfg_combine(a, c, u, {7.0, 0.75}).isApprox(expected, 1e-14));
  for (double s1 : {-2.0, 0.3, 7.0})
    for (double s2 : {0.0, 0.75, 4.0}) EXPECT_TRUE(cfg_combine(u, u, u, {s1, s2}).isApprox(u, 1e-12));
  EXPECT_THROW(cfg_combine(a, c, RowMatrix(2, 5), {}), std::invalid_argument);
}

TEST(GuidedEps, MissingModalityCollapsesToUnconditional) {
  int calls = 0;
  EpsFn model = [&](const RowMatrix& z, int, GuidancePass pass) -> RowMatrix {
    ++calls;
    return z.array() + (pass == GuidancePass::audio ? 1.0 : pass == GuidancePass::caption ? 2.0 : 0.0);
  };
  const RowMatrix z = RowMatrix::Constant(1, 3, 0.5);
  const GuidanceScales s{7.0, 0.75};
  EXPECT_EQ(guided_eps(model, z, 5, {false, false}, s), z);
  EXPECT_EQ(calls, 1);
  EXPECT_TRUE(guided_eps(model, z, 5, {true, false}, s).isApprox((z.array() + 7.0).matrix()));
  EXPECT_TRUE(guided_eps(model, z, 5, {false, true}, s).isApprox((z.array() + 1.5).matrix()));
  EXPECT_TRUE(guided_eps(model, z, 5, {true, true}, s).isApprox((z.array() + 8.5).matrix()));
}

TEST(DdimTimesteps, UniformStride) {
  const auto t = ddim_timesteps(1000, 50);
  ASSERT_EQ(t.size(), 50u);
  EXPECT_EQ(t.front(), 1000);
  EXPECT_EQ(t.back(), 20);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_EQ(t[i - 1] - t[i], 20);
  EXPECT_THROW(ddim_timesteps(1000, 0), std::invalid_argument);
  EXPECT_THROW(ddim_timesteps(1000, 1001), std::invalid_argument);
}

TEST(DdimSample, SingleStepGivesPosteriorMean) {
  const NoiseSchedule sch;
  const RowMatrix m = (RowMatrix(1, 4) << 0.5, -1.0, 2.0, 0.0).finished();
  const double s = 0.3;
  const GaussianOracle oracle{m, s, &sch};
  const EpsFn model = [&](const RowMatrix& z, int t, GuidancePass) { return oracle(z, t); };
  const RowMatrix out = ddim_sample(model, {true, true}, {7.0, 0.75}, sch, {1, 0.0}, 42, 1, 4);
  std::mt19937_64 rng(42);
  const RowMatrix zT = gaussian(1, 4, rng);
  const double ab = sch.abar(1000);
  const RowMatrix posterior = m + (std::sqrt(ab) * s * s / (ab * s * s + 1 - ab)) * (zT - std::sqrt(ab) * m);
  EXPECT_LT((out - posterior).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(DdimSample, FiftyStepsMatchAffineRecursion) {
  const NoiseSchedule sch;
  const RowMatrix m = (RowMatrix(1, 6) << 0.5, -1.0, 2.0, 0.0, 1.25, -0.4).finished();
  const double s = 0.5;
  const GaussianOracle oracle{m, s, &sch};
  const EpsFn model = [&](const RowMatrix& z, int t, GuidancePass) { return oracle(z, t); };
  const RowMatrix out = ddim_sample(model, {true, false}, {7.0, 0.75}, sch, {50, 0.0}, 9, 1, 6);
  std::mt19937_64 rng(9);
  const RowMatrix zT = gaussian(1, 6, rng);
  EXPECT_LT((out - affine_ddim(zT, m, s, sch, ddim_timesteps(1000, 50))).cwiseAbs().maxCoeff(), 1e-3);
  // the full chain lands near the exact probability-flow map
  const RowMatrix full = ddim_sample(model, {true, false}, {7.0, 0.75}, sch, {1000, 0.0}, 9, 1, 6);
  const double ab = sch.abar(1000);
  const RowMatrix flow = m + (s / std::sqrt(ab * s * s + 1 - ab)) * (zT - std::sqrt(ab) * m);
  EXPECT_LT((full - flow).cwiseAbs().maxCoeff(), 1e-2);
  // step-count band: |z_50 - z_1000| <= 0.05 * max(1, |z_T|) entrywise
  for (Eigen::Index j = 0; j < 6; ++j) EXPECT_LE(std::abs(out(0, j) - full(0, j)), 0.05 * std::max(1.0, std::abs(zT(0, j))));
}

TEST(DdimSample, DeterministicPerSeed) {
  const NoiseSchedule sch;
  const GaussianOracle oracle{RowMatrix::Zero(1, 3), 1.0, &sch};
  const EpsFn model = [&](const RowMatrix& z, int t, GuidancePass) { return oracle(z, t); };
  const auto a = ddim_sample(model, {true, true}, {}, sch, {}, 3, 1, 3);
  const auto b = ddim_sample(model, {true, true}, {}, sch, {}, 3, 1, 3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, ddim_sample(model, {true, true}, {}, sch, {}, 4, 1, 3));
}

TEST(Denoiser, OutputShapeAndEncoderLength) {
  const Denoiser<double> d(tiny_denoiser(), 1);
  const auto cfg = tiny_denoiser();
  for (int segs : {1, 3})
    for (bool audio : {false, true})
      for (bool locals : {false, true}) {
        const auto cs = caption_audio_set(segs, audio, locals);
        EXPECT_EQ(Denoiser<double>::encoder_length(cfg, cs), 1 + 1 + (locals ? segs : 0) + (audio ? segs : 0));
        const RowMatrix out = d.predict(RowMatrix::Ones(1, 6), 500, cs);
        EXPECT_EQ(out.rows(), 1);
        EXPECT_EQ(out.cols(), 6);
        EXPECT_TRUE(out.allFinite());
      }
  EXPECT_THROW(d.predict(RowMatrix::Ones(1, 5), 500, caption_audio_set(1, false, false)), std::invalid_argument);
}

TEST(Denoiser, PaperDefaultShape) {
  const DenoiserConfig cfg;
  EXPECT_EQ(cfg.encoder_layers, 9);
  EXPECT_EQ(cfg.decoder_layers, 9);
  EXPECT_EQ(cfg.heads, 4);
  EXPECT_EQ(cfg.width, 512);
  EXPECT_EQ(cfg.latent_tokens, 1);
  EXPECT_EQ(cfg.latent_dim, 512);
}

TEST(Denoiser, ZeroGlobalCaptionEqualsNullToken) {
  const Denoiser<double> d(tiny_denoiser(), 2);
  auto with_zero = caption_audio_set(3, true, true);
  with_zero.global_caption->vector.setZero();
  auto without = with_zero;
  without.global_caption.reset();
  const RowMatrix z = RowMatrix::Constant(1, 6, 0.3);
  EXPECT_EQ(d.predict(z, 10, with_zero), d.predict(z, 10, without));
}

TEST(Denoiser, ConditionsChangeThePrediction) {
  const Denoiser<double> d(tiny_denoiser(), 2);
  const auto cs = caption_audio_set(3, true, true);
  const RowMatrix z = RowMatrix::Constant(1, 6, 0.3);
  const RowMatrix full = d.predict(z, 10, cs);
  EXPECT_GT((full - d.predict(z, 10, pass_conditions(cs, GuidancePass::audio))).norm(), 1e-6);
  EXPECT_GT((full - d.predict(z, 10, pass_conditions(cs, GuidancePass::caption))).norm(), 1e-6);
  EXPECT_GT((d.predict(z, 10, cs) - d.predict(z, 11, cs)).norm(), 0.0);
}

TEST(Denoiser, CheckpointRoundTrip) {
  const Denoiser<double> d(tiny_denoiser(), 4);
  const auto ck = nn::Checkpoint::decode(d.to_checkpoint({{"latent_scale", 2.5}}).encode());
  EXPECT_EQ(ck.meta["latent_scale"], 2.5);
  const auto back = Denoiser<double>::from_checkpoint(ck);
  const auto cs = caption_audio_set(2, true, true);
  const RowMatrix z = RowMatrix::Constant(1, 6, -0.2);
  EXPECT_LT((back.predict(z, 7, cs) - d.predict(z, 7, cs)).cwiseAbs().maxCoeff(), 1e-5);  // float32 payload
  nn::Checkpoint wrong = ck;
  wrong.kind = "gesture_vae";
  EXPECT_THROW(Denoiser<double>::from_checkpoint(wrong), nn::CheckpointError);
}

TEST(PassConditions, MasksTheRightModality) {
  const auto cs = caption_audio_set(3, true, true);
  EXPECT_TRUE(pass_conditions(cs, GuidancePass::audio).caption_masked);
  EXPECT_FALSE(pass_conditions(cs, GuidancePass::audio).audio_masked);
  EXPECT_FALSE(pass_conditions(cs, GuidancePass::caption).caption_masked);
  EXPECT_TRUE(pass_conditions(cs, GuidancePass::caption).audio_masked);
  EXPECT_TRUE(pass_conditions(cs, GuidancePass::unconditional).caption_masked);
  EXPECT_TRUE(pass_conditions(cs, GuidancePass::unconditional).audio_masked);
}

TEST(DiffusionLoss, OracleModelGivesZero) {
  const NoiseSchedule sch;
  std::mt19937_64 rng(3);
  const RowMatrix z0 = gaussian(1, 8, rng);
  auto oracle = [&](Graph<double>& g, Var zt, int t, const conditioning::ConditionSet&) {
    const double ab = sch.abar(t);
    return g.constant((g.value(zt) - std::sqrt(ab) * z0) / std::sqrt(1 - ab));
  };
  for (int k = 0; k < 20; ++k) {
    Graph<double> g;
    EXPECT_LT(g.scalar(diffusion_loss(g, oracle, z0, {}, rng, sch, 0.1)), 1e-18);
  }
}

TEST(DiffusionLoss, ZeroModelGivesChiSquareMean) {
  const NoiseSchedule sch;
  std::mt19937_64 rng(4);
  const RowMatrix z0 = gaussian(1, 8, rng);
  auto zero = [](Graph<double>& g, Var zt, int, const conditioning::ConditionSet&) {
    return g.constant(Matrix<double>::Zero(g.rows(zt), g.cols(zt)));
  };
  const int n = 10000;
  double sum = 0;
  for (int k = 0; k < n; ++k) {
    Graph<double> g;
    sum += g.scalar(diffusion_loss(g, zero, z0, {}, rng, sch, 0.1));
  }
  EXPECT_NEAR(sum / n, 8.0, 3 * std::sqrt(16.0 / n));
}

TEST(DiffusionLoss, GradientOfSixteenParameterModelMatchesFiniteDifferences) {
  const NoiseSchedule sch;
  std::mt19937_64 data_rng(6);
  const RowMatrix z0 = gaussian(2, 4, data_rng);
  nn::ParameterStore<double> store;
  auto* W = store.normal("w", 4, 4, 0.5, data_rng);  // 16 parameters
  auto model = [&](Graph<double>& g, Var zt, int t, const conditioning::ConditionSet&) {
    return g.scale(g.matmul(zt, g.param(*W)), 1.0 + 1e-3 * t);
  };
  auto loss_at = [&](bool backward) {
    std::mt19937_64 rng(99);  // same t, eps and masks on every evaluation
    Graph<double> g;
    Var loss = diffusion_loss(g, model, z0, {}, rng, sch, 0.1);
    if (backward) g.backward(loss);
    return g.scalar(loss);
  };
  W->zero_grad();
  loss_at(true);
  const Matrix<double> analytic = W->grad;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < W->value.size(); ++i) {
    const double keep = W->value.data()[i];
    W->value.data()[i] = keep + h;
    const double up = loss_at(false);
    W->value.data()[i] = keep - h;
    const double down = loss_at(false);
    W->value.data()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic.data()[i]), 1e-8});
    EXPECT_LT(std::abs(numeric - analytic.data()[i]) / denom, 1e-4) << "entry " << i;
  }
}

TEST(DiffusionLoss, DenoiserGradientSpotCheck) {
  const NoiseSchedule sch;
  Denoiser<double> d(tiny_denoiser(), 8);
  const auto cs = caption_audio_set(2, true, true);
  std::mt19937_64 data_rng(1);
  const RowMatrix z0 = gaussian(1, 6, data_rng);
  auto eps_model = [&](Graph<double>& g, Var z, int t, const conditioning::ConditionSet& c) { return d.forward(g, z, t, c); };
  auto loss_at = [&](bool backward) {
    std::mt19937_64 rng(7);
    Graph<double> g;
    Var loss = diffusion_loss(g, eps_model, z0, cs, rng, sch, 0.0);
    if (backward) g.backward(loss);
    return g.scalar(loss);
  };
  for (auto* p : d.parameters().all()) p->zero_grad();
  loss_at(true);
  std::mt19937_64 pick(3);
  const auto params = d.parameters().all();
  for (int k = 0; k < 24; ++k) {
    auto* p = params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(pick)];
    const auto i = std::uniform_int_distribution<Eigen::Index>(0, p->value.size() - 1)(pick);
    const double keep = p->value.data()[i];
    const double h = 1e-5;
    p->value.data()[i] = keep + h;
    const double up = loss_at(false);
    p->value.data()[i] = keep - h;
    const double down = loss_at(false);
    p->value.data()[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double analytic = p->grad.data()[i];
    EXPECT_NEAR(numeric, analytic, 1e-4 * std::max(1.0, std::abs(numeric))) << p->name << "[" << i << "]";
  }
}

TEST(TrainDiffusion, DeterministicAndLearnsSimpleLatents) {
  const NoiseSchedule sch;
  std::vector<DiffusionExample> data;
  for (int i = 0; i < 8; ++i) {
    DiffusionExample ex;
    ex.z0 = RowMatrix::Constant(1, 6, i % 2 == 0 ? 1.0 : -1.0);
    ex.conditions = caption_audio_set(1, false, true);
    data.push_back(ex);
  }
  DiffusionTrainSettings settings;
  settings.epochs = 30;
  settings.batch_size = 4;
  settings.lr = 3e-3;
  settings.seed = 5;
  Denoiser<double> a(tiny_denoiser(), 1), b(tiny_denoiser(), 1);
  const auto ha = train_diffusion(a, data, sch, settings);
  const auto hb = train_diffusion(b, data, sch, settings);
  ASSERT_EQ(ha.size(), 30u);
  for (std::size_t i = 0; i < ha.size(); ++i) EXPECT_EQ(ha[i].loss, hb[i].loss);
  double first = 0, last = 0;
  for (int i = 0; i < 5; ++i) {
    first += ha[static_cast<std::size_t>(i)].loss;
    last += ha[ha.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  EXPECT_LT(last, first);
}

TEST(TrainDiffusion, NonFiniteLossAborts) {
  const NoiseSchedule sch;
  std::vector<DiffusionExample> data(1);
  data[0].z0 = RowMatrix::Constant(1, 6, std::nan(""));
  DiffusionTrainSettings settings;
  settings.epochs = 1;
  Denoiser<double> d(tiny_denoiser(), 1);
  EXPECT_THROW(train_diffusion(d, data, sch, settings), vae::TrainingDiverged);
  EXPECT_THROW(train_diffusion(d, {}, sch, settings), std::invalid_argument);
}
