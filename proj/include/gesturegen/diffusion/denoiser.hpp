#pragma once

// Hierarchically conditioned noise predictor.
//
// Encoder input rows: [z_t tokens (n) | timestep token | local caption
// tokens | audio tokens], self-attended into h. The decoder runs over h and
// cross-attends the single global-caption token (zero when absent). The
// first n decoder rows are mapped back to the latent width as eps_hat.

#include "gesturegen/conditioning/condition_set.hpp"
#include "gesturegen/diffusion/schedule.hpp"
#include "gesturegen/nn/checkpoint.hpp"
#include "gesturegen/nn/skip_stack.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <stdexcept>

namespace gesturegen::diffusion {

using nn::Graph;
using nn::Matrix;
using nn::Var;

struct DenoiserConfig {
  int encoder_layers = 9;
  int decoder_layers = 9;
  int heads = 4;
  int width = 512;
  int ff_hidden = 1024;
  int latent_tokens = 1;
  int latent_dim = 512;
  int max_segments = 16;

  void validate() const {
    if (width % heads != 0) throw std::invalid_argument("denoiser width must be divisible by heads");
    if (latent_tokens < 1 || latent_dim < 1) throw std::invalid_argument("denoiser latent shape must be positive");
    if (encoder_layers < 1 || decoder_layers < 1 || ff_hidden < 1 || max_segments < 1) {
      throw std::invalid_argument("denoiser sizes must be positive");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DenoiserConfig, encoder_layers, decoder_layers, heads, width, ff_hidden, latent_tokens,
                                   latent_dim, max_segments)

template <typename S>
class Denoiser {
 public:
  Denoiser(DenoiserConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const auto W = static_cast<Eigen::Index>(cfg_.width);
    latent_in_ = nn::Linear<S>(store_, "den.latent_in", cfg_.latent_dim, W, rng);
    time_in_ = nn::Linear<S>(store_, "den.time.in", W, cfg_.ff_hidden, rng);
    time_out_ = nn::Linear<S>(store_, "den.time.out", cfg_.ff_hidden, W, rng);
    conditions_ = conditioning::ConditionProjector<S>(store_, "den.cond", W, rng, cfg_.max_segments);
    encoder_ = nn::SkipEncoderStack<S>(store_, "den.encoder", cfg_.encoder_layers, W, cfg_.heads, cfg_.ff_hidden, rng, false);
    decoder_ = nn::SkipDecoderStack<S>(store_, "den.decoder", cfg_.decoder_layers, W, cfg_.heads, cfg_.ff_hidden, rng, false);
    out_ = nn::Linear<S>(store_, "den.out", W, cfg_.latent_dim, rng);
    latent_pos_ = nn::sinusoidal_encoding<S>(cfg_.latent_tokens, W);
  }

  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) noexcept = default;
  Denoiser& operator=(Denoiser&&) noexcept = default;

  [[nodiscard]] const DenoiserConfig& config() const { return cfg_; }
  nn::ParameterStore<S>& parameters() { return store_; }
  [[nodiscard]] const nn::ParameterStore<S>& parameters() const { return store_; }

  [[nodiscard]] static int encoder_length(const DenoiserConfig& cfg, const conditioning::ConditionSet& cs) {
    return cfg.latent_tokens + 1 + cs.local_token_count() + cs.audio_token_count();
  }

  Var forward(Graph<S>& g, Var z_t, int t, const conditioning::ConditionSet& cs) const {
    if (g.rows(z_t) != cfg_.latent_tokens || g.cols(z_t) != cfg_.latent_dim) {
      throw std::invalid_argument("denoiser: latent shape mismatch");
    }
    const int n = cfg_.latent_tokens;
    Var lat = g.add(latent_in_(g, z_t), g.constant(latent_pos_));
    Var time = time_out_(g, g.gelu(time_in_(g, g.constant(nn::sinusoidal_embedding<S>(t, cfg_.width)))));
    const auto cond = conditions_.project(g, cs);
    std::vector<Var> rows = {lat, time};
    if (cond.encoder_tokens.valid()) rows.push_back(cond.encoder_tokens);
    Var h = encoder_(g, g.concat_rows(rows));
    Var d = decoder_(g, h, cond.global);
    return out_(g, g.slice_rows(d, 0, n));
  }

  /// Inference helper on double matrices.
  [[nodiscard]] RowMatrix predict(const RowMatrix& z_t, int t, const conditioning::ConditionSet& cs) const {
    Graph<S> g(false);
    Var out = forward(g, g.constant(z_t.template cast<S>()), t, cs);
    return g.value(out).template cast<double>();
  }

  [[nodiscard]] nn::Checkpoint to_checkpoint(const nlohmann::json& meta = nlohmann::json::object()) const {
    nn::Checkpoint ck;
    ck.kind = "latent_denoiser";
    ck.config = cfg_;
    ck.meta = meta;
    ck.put_store(store_);
    return ck;
  }

  static Denoiser from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.kind != "latent_denoiser") throw nn::CheckpointError("checkpoint is not a latent denoiser");
    Denoiser d(ck.config.get<DenoiserConfig>(), 0);
    ck.load_store(d.store_);
    return d;
  }

 private:
  DenoiserConfig cfg_;
  nn::ParameterStore<S> store_;
  nn::Linear<S> latent_in_;
  nn::Linear<S> time_in_, time_out_;
  conditioning::ConditionProjector<S> conditions_;
  nn::SkipEncoderStack<S> encoder_;
  nn::SkipDecoderStack<S> decoder_;
  nn::Linear<S> out_;
  Matrix<S> latent_pos_;
};

/// ||eps - eps_hat(z_t, t, c)||^2 for one sample with t ~ U{1..T}, eps ~ N(0, I)
/// and the conditions passed through mask_for_cfg. `model` is any callable
/// (Graph&, Var z_t, int t, const ConditionSet&) -> Var.
template <typename S, typename Model>
Var diffusion_loss(Graph<S>& g, const Model& model, const RowMatrix& z0, const conditioning::ConditionSet& cs,
                   std::mt19937_64& rng, const NoiseSchedule& schedule, double mask_prob = 0.1) {
  std::uniform_int_distribution<int> step(1, schedule.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  const int t = step(rng);
  RowMatrix eps(z0.rows(), z0.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
  const RowMatrix z_t = q_sample(z0, t, eps, schedule);
  const auto masked = conditioning::mask_for_cfg(cs, rng, mask_prob);
  Var eps_hat = model(g, g.constant(z_t.template cast<S>()), t, masked);
  return g.sum(g.square(g.sub(eps_hat, g.constant(eps.template cast<S>()))));
}

}  // namespace gesturegen::diffusion
