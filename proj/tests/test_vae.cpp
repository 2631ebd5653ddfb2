#include "gesturegen/vae/gesture_vae.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gesturegen;
using nn::Graph;
using nn::Matrix;
using nn::Var;

namespace {

vae::VAEConfig tiny_config() {
  vae::VAEConfig c;
  c.layers = 3;
  c.heads = 2;
  c.width = 16;
  c.ff_hidden = 32;
  c.latent_dim = 8;
  c.feature_dim = 23;  // J = 2
  c.max_frames = 24;
  return c;
}

motion::FeatureMatrix wave_clip(int frames, int dim, double freq, double phase) {
  motion::FeatureMatrix f(frames, dim);
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < dim; ++c) f(t, c) = std::sin(freq * t + phase + 0.3 * c) * (1.0 + 0.05 * c);
  return f;
}

}  // namespace

TEST(GestureVAE, DefaultConfigMatchesPublishedShape) {
  const vae::VAEConfig cfg;
  EXPECT_EQ(cfg.layers, 9);
  EXPECT_EQ(cfg.heads, 4);
  EXPECT_EQ(cfg.latent_tokens, 1);
  EXPECT_EQ(cfg.latent_dim, 512);
  EXPECT_DOUBLE_EQ(cfg.kl_weight, 1e-4);
  vae::GestureVAE<float> model(cfg, 3);
  const auto params = model.encode(wave_clip(6, 659, 0.2, 0.0), std::vector<bool>(6, true));
  EXPECT_EQ(params.mu.rows(), 1);
  EXPECT_EQ(params.mu.cols(), 512);
  EXPECT_EQ(params.log_sigma.rows(), 1);
  EXPECT_EQ(params.log_sigma.cols(), 512);
}

TEST(GestureVAE, EncodeIsDeterministicAndChecksWidth) {
  vae::GestureVAE<double> model(tiny_config(), 11);
  const auto clip = wave_clip(20, 23, 0.3, 0.1);
  const std::vector<bool> valid(20, true);
  const auto a = model.encode(clip, valid);
  const auto b = model.encode(clip, valid);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.log_sigma, b.log_sigma);
  EXPECT_THROW(model.encode(wave_clip(20, 22, 0.3, 0.1), valid), std::invalid_argument);
}

TEST(GestureVAE, MaskedFramesAreIgnored) {
  vae::GestureVAE<double> model(tiny_config(), 12);
  const auto real = wave_clip(14, 23, 0.4, 0.2);
  const auto truncated = model.encode(real, std::vector<bool>(14, true));

  motion::FeatureMatrix padded(24, 23);
  padded.topRows(14) = real;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 3.0);
  for (int t = 14; t < 24; ++t)
    for (int c = 0; c < 23; ++c) padded(t, c) = noise(rng);
  std::vector<bool> valid(24, false);
  std::fill(valid.begin(), valid.begin() + 14, true);
  const auto masked = model.encode(padded, valid);

  // permute the padded frames
  motion::FeatureMatrix permuted = padded;
  for (int t = 14; t < 24; ++t) permuted.row(t) = padded.row(14 + (23 - t));
  const auto masked_permuted = model.encode(permuted, valid);

  EXPECT_LT((truncated.mu - masked.mu).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((truncated.log_sigma - masked.log_sigma).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((masked_permuted.mu - masked.mu).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GestureVAE, DecodeShapesAndDeterminism) {
  auto cfg = tiny_config();
  cfg.max_frames = 180;
  vae::GestureVAE<float> model(cfg, 13);
  vae::LatentVector z{Matrix<double>::Constant(1, 8, 0.3)};
  const auto out = model.decode(z, 180);
  EXPECT_EQ(out.rows(), 180);
  EXPECT_EQ(out.cols(), 23);
  EXPECT_EQ(model.decode(z, 180), out);
  EXPECT_EQ(model.decode(z, 50).rows(), 50);
  EXPECT_THROW(model.decode(z, 0), std::invalid_argument);
  vae::LatentVector wrong{Matrix<double>::Zero(1, 7)};
  EXPECT_THROW(model.decode(wrong, 10), std::invalid_argument);
}

TEST(Reparameterize, CollapsesToMeanAndIsSeeded) {
  vae::GaussianParams p{Matrix<double>::Constant(1, 6, 0.7), Matrix<double>::Constant(1, 6, -60.0)};
  std::mt19937_64 rng(1);
  const auto z = vae::reparameterize(p, rng);
  EXPECT_LT((z.tokens - p.mu).cwiseAbs().maxCoeff(), 1e-20);

  p.log_sigma.setConstant(0.2);
  std::mt19937_64 r1(42);
  std::mt19937_64 r2(42);
  EXPECT_EQ(vae::reparameterize(p, r1).tokens, vae::reparameterize(p, r2).tokens);
}

TEST(Reparameterize, SampleMeanWithinCltBound) {
  vae::GaussianParams p{Matrix<double>(1, 4), Matrix<double>(1, 4)};
  p.mu << 0.5, -1.0, 2.0, 0.0;
  p.log_sigma << 0.0, -0.5, 0.3, 1.0;
  std::mt19937_64 rng(7);
  Matrix<double> sum = Matrix<double>::Zero(1, 4);
  const int n = 10000;
  for (int i = 0; i < n; ++i) sum += vae::reparameterize(p, rng).tokens;
  for (int k = 0; k < 4; ++k) {
    const double sigma = std::exp(p.log_sigma(0, k));
    EXPECT_LT(std::abs(sum(0, k) / n - p.mu(0, k)), 3.0 * sigma / std::sqrt(double(n)));
  }
}

TEST(VaeLoss, DegenerateCases) {
  Graph<double> g;
  Matrix<double> x = wave_clip(5, 3, 0.5, 0.0);
  Matrix<double> other = x.array() + 0.5;
  other(2, 1) += 1.0;
  const std::vector<bool> all(5, true);
  Var mu = g.constant(Matrix<double>::Zero(1, 4));
  Var ls = g.constant(Matrix<double>::Zero(1, 4));
  auto same = vae::vae_loss(g, g.constant(x), g.constant(x), mu, ls, all, 1e-4);
  EXPECT_DOUBLE_EQ(g.scalar(same.total), 0.0);

  auto diff = vae::vae_loss(g, g.constant(x), g.constant(other), mu, ls, all, 1e-4);
  const double mse = (other - x).array().square().mean();
  EXPECT_DOUBLE_EQ(g.scalar(diff.total), mse);
  EXPECT_DOUBLE_EQ(g.scalar(diff.recon), mse);

  // padded rows do not count
  std::vector<bool> partial = {true, true, false, true, true};
  auto masked = vae::vae_loss(g, g.constant(x), g.constant(other), mu, ls, partial, 0.0);
  double sq = 0;
  for (int r : {0, 1, 3, 4}) sq += (other.row(r) - x.row(r)).squaredNorm();
  EXPECT_NEAR(g.scalar(masked.total), sq / 12.0, 1e-15);
}

TEST(VaeLoss, ClosedFormKl) {
  EXPECT_DOUBLE_EQ(vae::kl_divergence(Matrix<double>::Constant(1, 1, 1.0), Matrix<double>::Zero(1, 1)), 0.5);
  EXPECT_DOUBLE_EQ(vae::kl_divergence(Matrix<double>::Zero(3, 2), Matrix<double>::Zero(3, 2)), 0.0);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix<double> mu(1, 5), ls(1, 5);
    for (int k = 0; k < 5; ++k) {
      mu(0, k) = n(rng);
      ls(0, k) = n(rng);
    }
    const double kl = vae::kl_divergence(mu, ls);
    EXPECT_GT(kl, 0.0);
    // graph version agrees and total decomposes exactly
    Graph<double> g;
    Matrix<double> x = Matrix<double>::Constant(2, 2, 1.0), xh = Matrix<double>::Constant(2, 2, 1.5);
    auto l = vae::vae_loss(g, g.constant(x), g.constant(xh), g.constant(mu), g.constant(ls), {true, true}, 0.37);
    EXPECT_NEAR(g.scalar(l.kl), kl, 1e-9 * std::max(1.0, kl));
    EXPECT_DOUBLE_EQ(g.scalar(l.total), g.scalar(l.recon) + 0.37 * g.scalar(l.kl));
  }
}

// 16-parameter toy encoder: mu and log sigma are linear maps of the pooled frames.
TEST(VaeLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 0.5);
  auto random = [&](int r, int c) {
    Matrix<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  const Matrix<double> x = random(6, 2);
  const Matrix<double> eps = random(1, 4);
  const Matrix<double> decoder = random(4, 2);
  const std::vector<bool> valid = {true, true, true, true, false, true};
  nn::Parameter<double> w_mu("w_mu", random(2, 4));
  nn::Parameter<double> w_ls("w_ls", random(2, 4));
  ASSERT_EQ(w_mu.size() + w_ls.size(), 16);

  auto loss = [&](Graph<double>& g) {
    Var pooled = g.mean_rows(g.constant(x));
    Var mu = g.matmul(pooled, g.param(w_mu));
    Var ls = g.matmul(pooled, g.param(w_ls));
    Var z = g.add(mu, g.mul(g.exp(ls), g.constant(eps)));
    Var xh = g.broadcast_rows(g.matmul(z, g.constant(decoder)), 6);
    return vae::vae_loss(g, g.constant(x), xh, mu, ls, valid, 0.3).total;
  };
  Graph<double> g;
  g.backward(loss(g));
  double worst = 0;
  for (auto* p : {&w_mu, &w_ls}) {
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      const double orig = p->value.data()[i];
      const double h = 1e-5;
      p->value.data()[i] = orig + h;
      Graph<double> gp(false);
      const double up = gp.scalar(loss(gp));
      p->value.data()[i] = orig - h;
      Graph<double> gm(false);
      const double down = gm.scalar(loss(gm));
      p->value.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.data()[i];
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(TrainVae, DeterministicAndDecreasing) {
  std::vector<vae::TrainExample> data;
  for (int i = 0; i < 8; ++i) {
    vae::TrainExample ex{wave_clip(16, 23, 0.2 + 0.05 * i, 0.3 * i), std::vector<bool>(16, true)};
    if (i % 3 == 0) std::fill(ex.valid.begin() + 12, ex.valid.end(), false);
    data.push_back(ex);
  }
  vae::TrainSettings s{.epochs = 150, .batch_size = 4, .lr = 1e-3, .seed = 9};
  auto cfg = tiny_config();
  cfg.kl_weight = 0.0;
  vae::GestureVAE<double> a(cfg, 1);
  vae::GestureVAE<double> b(cfg, 1);
  const auto ha = vae::train_vae(a, data, s);
  const auto hb = vae::train_vae(b, data, s);
  ASSERT_EQ(ha.size(), 150u);
  EXPECT_NEAR(ha.back().loss, hb.back().loss, 1e-12);
  // smoothed reconstruction trend goes down
  auto window = [&](int from) {
    double m = 0;
    for (int e = from; e < from + 5; ++e) m += ha[static_cast<std::size_t>(e)].recon;
    return m / 5;
  };
  EXPECT_LT(window(145), window(0));
  EXPECT_LT(window(145), 0.5 * window(0));
}

TEST(GestureVAE, CheckpointRoundTrip) {
  vae::GestureVAE<float> model(tiny_config(), 5);
  model.normalizer().mean = Eigen::RowVectorXd::Constant(23, 0.25);
  model.normalizer().std = Eigen::RowVectorXd::Constant(23, 2.0);
  const auto ck = nn::Checkpoint::decode(model.to_checkpoint({{"epoch", 3}}).encode());
  EXPECT_EQ(ck.meta.at("epoch"), 3);
  auto loaded = vae::GestureVAE<float>::from_checkpoint(ck);
  EXPECT_EQ(loaded.config().width, 16);
  vae::LatentVector z{Matrix<double>::Constant(1, 8, -0.2)};
  EXPECT_EQ(loaded.decode(z, 10), model.decode(z, 10));
  EXPECT_THROW(nn::Checkpoint::decode("{}\n"), nn::CheckpointError);
}
