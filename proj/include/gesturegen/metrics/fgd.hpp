#pragma once

// Convolutional autoencoder whose time-pooled latent feeds the Frechet
// gesture distance. Encoder: four conv layers (two stride-2), decoder: four
// conv layers with two nearest-neighbour x2 upsamplings. LeakyReLU follows
// every conv except the output projection.

#include "gesturegen/metrics/frechet.hpp"
#include "gesturegen/nn/checkpoint.hpp"
#include "gesturegen/nn/optim.hpp"
#include "gesturegen/vae/gesture_vae.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace gesturegen::metrics {

using nn::Graph;
using nn::Matrix;
using nn::Var;

struct FGDConfig {
  int feature_dim = 659;
  int channels = 256;
  int latent_dim = 240;
  double slope = 0.2;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FGDConfig, feature_dim, channels, latent_dim, slope)

template <typename S>
struct Conv1d {
  nn::Linear<S> proj;
  int kernel = 3;
  int stride = 1;

  Conv1d() = default;
  Conv1d(nn::ParameterStore<S>& store, const std::string& name, Eigen::Index in, Eigen::Index out, int k, int s,
         std::mt19937_64& rng)
      : proj(store, name, in * k, out, rng), kernel(k), stride(s) {}

  /// Same-length (stride 1) or halving (stride 2) convolution over rows.
  Var operator()(Graph<S>& g, Var x) const {
    const int pad = stride == 1 ? kernel / 2 : (kernel - stride) / 2;
    return proj(g, g.unfold_rows(x, kernel, stride, pad));
  }
};

template <typename S>
class FGDExtractor {
 public:
  FGDExtractor(FGDConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    std::mt19937_64 rng(seed);
    const Eigen::Index C = cfg_.channels;
    enc_ = {Conv1d<S>(store_, "fgd.enc0", cfg_.feature_dim, C, 3, 1, rng), Conv1d<S>(store_, "fgd.enc1", C, C, 4, 2, rng),
            Conv1d<S>(store_, "fgd.enc2", C, C, 3, 1, rng), Conv1d<S>(store_, "fgd.enc3", C, cfg_.latent_dim, 4, 2, rng)};
    dec_ = {Conv1d<S>(store_, "fgd.dec0", cfg_.latent_dim, C, 3, 1, rng), Conv1d<S>(store_, "fgd.dec1", C, C, 3, 1, rng),
            Conv1d<S>(store_, "fgd.dec2", C, C, 3, 1, rng), Conv1d<S>(store_, "fgd.dec3", C, cfg_.feature_dim, 3, 1, rng)};
    normalizer_ = vae::FeatureNormalizer::identity(cfg_.feature_dim);
  }

  FGDExtractor(const FGDExtractor&) = delete;
  FGDExtractor& operator=(const FGDExtractor&) = delete;
  FGDExtractor(FGDExtractor&&) noexcept = default;
  FGDExtractor& operator=(FGDExtractor&&) noexcept = default;

  [[nodiscard]] const FGDConfig& config() const { return cfg_; }
  nn::ParameterStore<S>& parameters() { return store_; }
  vae::FeatureNormalizer& normalizer() { return normalizer_; }

  /// Latent sequence (T/4 x latent) of normalized features; T divisible by 4.
  Var encode(Graph<S>& g, Var x) const {
    if (g.rows(x) % 4 != 0) throw std::invalid_argument("FGD extractor: frame count must be divisible by 4");
    for (const auto& c : enc_) x = g.leaky_relu(c(g, x), static_cast<S>(cfg_.slope));
    return x;
  }

  Var decode(Graph<S>& g, Var z) const {
    z = g.leaky_relu(dec_[0](g, z), static_cast<S>(cfg_.slope));
    z = g.leaky_relu(dec_[1](g, g.repeat_rows(z, 2)), static_cast<S>(cfg_.slope));
    z = g.leaky_relu(dec_[2](g, g.repeat_rows(z, 2)), static_cast<S>(cfg_.slope));
    return dec_[3](g, z);
  }

  /// Time-averaged latent of raw features: one 240-d row per clip.
  [[nodiscard]] Eigen::RowVectorXd embed(const motion::FeatureMatrix& features) const {
    if (features.cols() != cfg_.feature_dim) throw std::invalid_argument("FGD extractor: feature width mismatch");
    Graph<S> g(false);
    Var z = encode(g, g.constant(normalizer_.normalize(features).template cast<S>()));
    return g.value(g.mean_rows(z)).template cast<double>();
  }

  [[nodiscard]] SampleMatrix embed_all(const std::vector<motion::FeatureMatrix>& clips) const {
    SampleMatrix out(static_cast<Eigen::Index>(clips.size()), cfg_.latent_dim);
    for (std::size_t i = 0; i < clips.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embed(clips[i]);
    return out;
  }

  /// Reconstruction training on real clips only.
  std::vector<double> train(const std::vector<motion::FeatureMatrix>& clips, int epochs, int batch_size, double lr,
                            std::uint64_t seed) {
    if (clips.empty()) throw std::invalid_argument("FGD extractor: no training clips");
    std::vector<const motion::FeatureMatrix*> ptrs;
    std::vector<const std::vector<bool>*> masks(clips.size(), nullptr);
    for (const auto& c : clips) ptrs.push_back(&c);
    normalizer_ = vae::FeatureNormalizer::fit(ptrs, masks);
    std::vector<Matrix<S>> data;
    for (const auto& c : clips) data.push_back(normalizer_.normalize(c).template cast<S>());
    nn::AdamW<S> opt(store_.all(), {.lr = lr, .weight_decay = 0.0, .clip_norm = 1.0});
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> history;
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      double total = 0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        for (std::size_t b = start; b < stop; ++b) {
          Graph<S> g;
          Var x = g.constant(data[order[b]]);
          Var loss = g.mean(g.square(g.sub(decode(g, encode(g, x)), x)));
          total += g.scalar(loss);
          g.backward(loss);
        }
        opt.step(1.0 / static_cast<double>(stop - start));
      }
      history.push_back(total / static_cast<double>(data.size()));
    }
    return history;
  }

  [[nodiscard]] nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.kind = "fgd_extractor";
    ck.config = cfg_;
    ck.put_store(store_);
    ck.put<double>("normalizer.mean", normalizer_.mean);
    ck.put<double>("normalizer.std", normalizer_.std);
    return ck;
  }

  static FGDExtractor from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.kind != "fgd_extractor") throw nn::CheckpointError("checkpoint is not an FGD extractor");
    FGDExtractor f(ck.config.get<FGDConfig>(), 0);
    ck.load_store(f.store_);
    f.normalizer_.mean = ck.at("normalizer.mean").row(0).template cast<double>();
    f.normalizer_.std = ck.at("normalizer.std").row(0).template cast<double>();
    return f;
  }

 private:
  FGDConfig cfg_;
  nn::ParameterStore<S> store_;
  std::vector<Conv1d<S>> enc_;
  std::vector<Conv1d<S>> dec_;
  vae::FeatureNormalizer normalizer_;
};

template <typename S>
double fgd(const std::vector<motion::FeatureMatrix>& real, const std::vector<motion::FeatureMatrix>& generated,
           const FGDExtractor<S>& extractor) {
  if (real.size() < 2 || generated.size() < 2) throw std::invalid_argument("fgd: need at least two clips per side");
  return frechet_distance(extractor.embed_all(real), extractor.embed_all(generated));
}

}  // namespace gesturegen::metrics
