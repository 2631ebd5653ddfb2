#pragma once

// Transformer VAE over unified motion features.
//
// Encoder: frame tokens (linear embed + sinusoidal positions) are prefixed
// with 2n learnable distribution tokens; after the skip-connected encoder
// stack, the first n rows give mu and the next n rows give log sigma.
// Decoder: zero query tokens plus positions cross-attend the projected
// latent and a linear head maps back to feature width.

#include "gesturegen/motion/features.hpp"
#include "gesturegen/nn/checkpoint.hpp"
#include "gesturegen/nn/optim.hpp"
#include "gesturegen/nn/skip_stack.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace gesturegen::vae {

using nn::Graph;
using nn::Matrix;
using nn::Var;

struct VAEConfig {
  int layers = 9;
  int heads = 4;
  int width = 512;
  int ff_hidden = 1024;
  int latent_tokens = 1;
  int latent_dim = 512;
  double kl_weight = 1e-4;
  int feature_dim = 659;
  int max_frames = 180;
  bool long_skips = true;

  void validate() const {
    if (width % heads != 0) throw std::invalid_argument("VAE width must be divisible by heads");
    if (latent_tokens < 1) throw std::invalid_argument("VAE needs at least one latent token");
    if (layers < 1 || latent_dim < 1 || feature_dim < 1 || max_frames < 1 || ff_hidden < 1) {
      throw std::invalid_argument("VAE sizes must be positive");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VAEConfig, layers, heads, width, ff_hidden, latent_tokens, latent_dim, kl_weight,
                                   feature_dim, max_frames, long_skips)

struct GaussianParams {
  Matrix<double> mu;
  Matrix<double> log_sigma;
};

struct LatentVector {
  Matrix<double> tokens;  // n x d
};

/// Per-feature standardization fitted on real (unpadded) training frames.
struct FeatureNormalizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd std;

  static FeatureNormalizer identity(int dim) {
    return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
  }

  static FeatureNormalizer fit(const std::vector<const motion::FeatureMatrix*>& clips,
                               const std::vector<const std::vector<bool>*>& masks, double floor = 1e-2) {
    if (clips.empty()) throw std::invalid_argument("cannot fit a normalizer on no data");
    const Eigen::Index dim = clips.front()->cols();
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(dim);
    double n = 0;
    for (std::size_t c = 0; c < clips.size(); ++c) {
      for (Eigen::Index t = 0; t < clips[c]->rows(); ++t) {
        if (masks[c] != nullptr && !(*masks[c])[static_cast<std::size_t>(t)]) continue;
        sum += clips[c]->row(t);
        sq += clips[c]->row(t).cwiseProduct(clips[c]->row(t));
        n += 1;
      }
    }
    FeatureNormalizer out;
    out.mean = sum / n;
    out.std = (sq / n - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0).cwiseSqrt().cwiseMax(floor);
    return out;
  }

  [[nodiscard]] motion::FeatureMatrix normalize(const motion::FeatureMatrix& f) const {
    motion::FeatureMatrix out = f.rowwise() - mean;
    out.array().rowwise() /= std.array();
    return out;
  }

  [[nodiscard]] motion::FeatureMatrix denormalize(const motion::FeatureMatrix& f) const {
    motion::FeatureMatrix out = f;
    out.array().rowwise() *= std.array();
    out.rowwise() += mean;
    return out;
  }
};

/// Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over all entries.
inline double kl_divergence(const Matrix<double>& mu, const Matrix<double>& log_sigma) {
  return 0.5 * (mu.array().square() + (2.0 * log_sigma.array()).exp() - 1.0 - 2.0 * log_sigma.array()).sum();
}

template <typename S>
struct VaeLossVars {
  Var total;
  Var recon;
  Var kl;
};

/// total = masked mean squared error + beta * KL.
template <typename S>
VaeLossVars<S> vae_loss(Graph<S>& g, Var x, Var x_hat, Var mu, Var log_sigma, const std::vector<bool>& valid,
                        double beta) {
  if (g.rows(x) != g.rows(x_hat) || g.cols(x) != g.cols(x_hat)) throw std::invalid_argument("vae_loss: shape mismatch");
  if (static_cast<Eigen::Index>(valid.size()) != g.rows(x)) throw std::invalid_argument("vae_loss: mask length mismatch");
  std::vector<S> w(valid.size());
  std::size_t real = 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    w[i] = valid[i] ? S(1) : S(0);
    real += valid[i] ? 1 : 0;
  }
  if (real == 0) throw std::invalid_argument("vae_loss: no valid frames");
  Var diff = g.scale_rows(g.sub(x_hat, x), w);
  Var recon = g.scale(g.sum(g.square(diff)), S(1) / static_cast<S>(real * static_cast<std::size_t>(g.cols(x))));
  // 0.5 * sum(mu^2 + exp(2 log_sigma) - 1 - 2 log_sigma)
  Var two_ls = g.scale(log_sigma, S(2));
  Var inner = g.sub(g.add(g.square(mu), g.exp(two_ls)), g.add_scalar(two_ls, S(1)));
  Var kl = g.scale(g.sum(inner), S(0.5));
  Var total = g.add(recon, g.scale(kl, static_cast<S>(beta)));
  return {total, recon, kl};
}

template <typename S>
class GestureVAE {
 public:
  struct Encoded {
    Var mu;
    Var log_sigma;
  };

  GestureVAE(VAEConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const auto W = static_cast<Eigen::Index>(cfg_.width);
    in_proj_ = nn::Linear<S>(store_, "enc.in_proj", cfg_.feature_dim, W, rng);
    dist_tokens_ = store_.normal("enc.dist_tokens", 2 * cfg_.latent_tokens, W, 0.02, rng);
    encoder_ = nn::SkipEncoderStack<S>(store_, "enc.stack", cfg_.layers, W, cfg_.heads, cfg_.ff_hidden, rng, cfg_.long_skips);
    mu_head_ = nn::Linear<S>(store_, "enc.mu", W, cfg_.latent_dim, rng);
    sigma_head_ = nn::Linear<S>(store_, "enc.log_sigma", W, cfg_.latent_dim, rng);
    latent_proj_ = nn::Linear<S>(store_, "dec.latent_proj", cfg_.latent_dim, W, rng);
    decoder_ = nn::SkipDecoderStack<S>(store_, "dec.stack", cfg_.layers, W, cfg_.heads, cfg_.ff_hidden, rng, cfg_.long_skips);
    out_proj_ = nn::Linear<S>(store_, "dec.out_proj", W, cfg_.feature_dim, rng);
    positions_ = nn::sinusoidal_encoding<S>(cfg_.max_frames, W);
    normalizer_ = FeatureNormalizer::identity(cfg_.feature_dim);
  }

  GestureVAE(const GestureVAE&) = delete;
  GestureVAE& operator=(const GestureVAE&) = delete;
  GestureVAE(GestureVAE&&) noexcept = default;
  GestureVAE& operator=(GestureVAE&&) noexcept = default;

  [[nodiscard]] const VAEConfig& config() const { return cfg_; }
  nn::ParameterStore<S>& parameters() { return store_; }
  [[nodiscard]] const nn::ParameterStore<S>& parameters() const { return store_; }
  FeatureNormalizer& normalizer() { return normalizer_; }
  [[nodiscard]] const FeatureNormalizer& normalizer() const { return normalizer_; }

  /// Encodes normalized features; frames with valid[t] == false are masked out.
  Encoded encode(Graph<S>& g, const Matrix<S>& x, const std::vector<bool>& valid) const {
    if (x.cols() != cfg_.feature_dim) throw std::invalid_argument("VAE encode: feature width mismatch");
    if (x.rows() < 1 || x.rows() > cfg_.max_frames) throw std::invalid_argument("VAE encode: frame count out of range");
    if (static_cast<Eigen::Index>(valid.size()) != x.rows()) throw std::invalid_argument("VAE encode: mask length mismatch");
    const int n = cfg_.latent_tokens;
    Var frames = in_proj_(g, g.constant(x));
    frames = g.add(frames, g.constant(positions_.topRows(x.rows())));
    Var tokens = g.concat_rows({g.param(*dist_tokens_), frames});
    Matrix<S> bias = Matrix<S>::Zero(1, 2 * n + x.rows());
    for (std::size_t t = 0; t < valid.size(); ++t) {
      if (!valid[t]) bias(0, 2 * n + static_cast<Eigen::Index>(t)) = S(-1e9);
    }
    Var h = encoder_(g, tokens, &bias);
    return {mu_head_(g, g.slice_rows(h, 0, n)), sigma_head_(g, g.slice_rows(h, n, n))};
  }

  /// Decodes latent tokens to `frames` normalized feature rows.
  Var decode(Graph<S>& g, Var z, int frames) const {
    if (frames < 1) throw std::invalid_argument("VAE decode: target length must be at least 1");
    if (frames > cfg_.max_frames) throw std::invalid_argument("VAE decode: target length exceeds max_frames");
    if (g.rows(z) != cfg_.latent_tokens || g.cols(z) != cfg_.latent_dim) {
      throw std::invalid_argument("VAE decode: latent shape mismatch");
    }
    Var memory = latent_proj_(g, z);
    Var queries = g.constant(positions_.topRows(frames));
    Var h = decoder_(g, queries, memory);
    return out_proj_(g, h);
  }

  // ---- convenience wrappers on raw (unnormalized) features ----------------

  [[nodiscard]] GaussianParams encode(const motion::FeatureMatrix& features, const std::vector<bool>& valid) const {
    if (features.cols() != cfg_.feature_dim) throw std::invalid_argument("VAE encode: feature width mismatch");
    Graph<S> g(false);
    const Matrix<S> x = normalizer_.normalize(features).template cast<S>();
    const auto e = encode(g, x, valid);
    return {g.value(e.mu).template cast<double>(), g.value(e.log_sigma).template cast<double>()};
  }

  [[nodiscard]] motion::FeatureMatrix decode(const LatentVector& z, int frames) const {
    Graph<S> g(false);
    Var out = decode(g, g.constant(z.tokens.template cast<S>()), frames);
    return normalizer_.denormalize(g.value(out).template cast<double>());
  }

  [[nodiscard]] nn::Checkpoint to_checkpoint(const nlohmann::json& meta = nlohmann::json::object()) const {
    nn::Checkpoint ck;
    ck.kind = "gesture_vae";
    ck.config = cfg_;
    ck.meta = meta;
    ck.put_store(store_);
    ck.put<double>("normalizer.mean", normalizer_.mean);
    ck.put<double>("normalizer.std", normalizer_.std);
    return ck;
  }

  static GestureVAE from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.kind != "gesture_vae") throw nn::CheckpointError("checkpoint is not a gesture VAE");
    GestureVAE vae(ck.config.get<VAEConfig>(), 0);
    ck.load_store(vae.store_);
    vae.normalizer_.mean = ck.at("normalizer.mean").row(0).template cast<double>();
    vae.normalizer_.std = ck.at("normalizer.std").row(0).template cast<double>();
    return vae;
  }

 private:
  VAEConfig cfg_;
  nn::ParameterStore<S> store_;
  nn::Linear<S> in_proj_;
  nn::Parameter<S>* dist_tokens_ = nullptr;
  nn::SkipEncoderStack<S> encoder_;
  nn::Linear<S> mu_head_, sigma_head_;
  nn::Linear<S> latent_proj_;
  nn::SkipDecoderStack<S> decoder_;
  nn::Linear<S> out_proj_;
  Matrix<S> positions_;
  FeatureNormalizer normalizer_;
};

/// z = mu + sigma * eps with eps ~ N(0, I) drawn from `rng`.
inline LatentVector reparameterize(const GaussianParams& p, std::mt19937_64& rng) {
  if (p.mu.rows() != p.log_sigma.rows() || p.mu.cols() != p.log_sigma.cols()) {
    throw std::invalid_argument("reparameterize: shape mismatch");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentVector z;
  z.tokens = p.mu;
  for (Eigen::Index i = 0; i < z.tokens.size(); ++i) {
    z.tokens.data()[i] += std::exp(p.log_sigma.data()[i]) * normal(rng);
  }
  return z;
}

// ---- training ---------------------------------------------------------------

struct TrainExample {
  motion::FeatureMatrix features;  // raw (unnormalized) features, padded
  std::vector<bool> valid;
};

struct TrainSettings {
  int epochs = 6000;
  int batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainSettings, epochs, batch_size, lr, weight_decay, clip_norm, seed)

struct EpochRecord {
  int epoch = 0;
  double loss = 0;
  double recon = 0;
  double kl = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minibatch AdamW training; fits the model's normalizer on `data` first.
template <typename S>
std::vector<EpochRecord> train_vae(GestureVAE<S>& model, const std::vector<TrainExample>& data, const TrainSettings& settings,
                                   const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (data.empty()) throw std::invalid_argument("train_vae: empty dataset");
  std::vector<const motion::FeatureMatrix*> clips;
  std::vector<const std::vector<bool>*> masks;
  for (const auto& ex : data) {
    clips.push_back(&ex.features);
    masks.push_back(&ex.valid);
  }
  model.normalizer() = FeatureNormalizer::fit(clips, masks);
  std::vector<Matrix<S>> normalized;
  normalized.reserve(data.size());
  for (const auto& ex : data) normalized.push_back(model.normalizer().normalize(ex.features).template cast<S>());

  nn::AdamW<S> opt(model.parameters().all(),
                   {.lr = settings.lr, .weight_decay = settings.weight_decay, .clip_norm = settings.clip_norm});
  std::mt19937_64 rng(settings.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const double beta = model.config().kl_weight;
  const auto n = model.config().latent_tokens;
  const auto d = model.config().latent_dim;

  std::vector<EpochRecord> history;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec{epoch + 1, 0, 0, 0};
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(settings.batch_size));
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        Graph<S> g;
        auto enc = model.encode(g, normalized[i], data[i].valid);
        Matrix<S> eps(n, d);
        for (Eigen::Index k = 0; k < eps.size(); ++k) eps.data()[k] = static_cast<S>(normal(rng));
        Var z = g.add(enc.mu, g.mul(g.exp(enc.log_sigma), g.constant(eps)));
        Var x_hat = model.decode(g, z, static_cast<int>(normalized[i].rows()));
        auto loss = vae_loss(g, g.constant(normalized[i]), x_hat, enc.mu, enc.log_sigma, data[i].valid, beta);
        const double total = g.scalar(loss.total);
        if (!std::isfinite(total)) {
          throw TrainingDiverged("VAE loss became non-finite at epoch " + std::to_string(epoch + 1) + ", sample " +
                                 std::to_string(i));
        }
        rec.loss += total;
        rec.recon += g.scalar(loss.recon);
        rec.kl += g.scalar(loss.kl);
        g.backward(loss.total);
      }
      opt.step(1.0 / static_cast<double>(stop - start));
    }
    const auto count = static_cast<double>(data.size());
    rec.loss /= count;
    rec.recon /= count;
    rec.kl /= count;
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

}  // namespace gesturegen::vae
