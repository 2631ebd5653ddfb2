#pragma once

// Transformer building blocks on top of the autograd Graph.

#include "gesturegen/nn/autograd.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace gesturegen::nn {

/// Owns every Parameter of a model. Addresses are stable for the store's
/// lifetime, including across moves of the store itself.
template <typename S>
class ParameterStore {
 public:
  Parameter<S>* create(const std::string& name, Matrix<S> init) {
    for (const auto& p : params_) {
      if (p->name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    params_.push_back(std::make_unique<Parameter<S>>(name, std::move(init)));
    return params_.back().get();
  }

  /// Glorot-uniform fan_in x fan_out matrix.
  Parameter<S>* glorot(const std::string& name, Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix<S> m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
    return create(name, std::move(m));
  }

  Parameter<S>* normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<S> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
    return create(name, std::move(m));
  }

  Parameter<S>* zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return create(name, Matrix<S>::Zero(rows, cols));
  }

  Parameter<S>* ones(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return create(name, Matrix<S>::Ones(rows, cols));
  }

  [[nodiscard]] std::vector<Parameter<S>*> all() const {
    std::vector<Parameter<S>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  [[nodiscard]] Parameter<S>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  [[nodiscard]] std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
};

template <typename S>
struct Linear {
  Parameter<S>* weight = nullptr;  // in x out
  Parameter<S>* bias = nullptr;    // 1 x out, optional

  Linear() = default;
  Linear(ParameterStore<S>& store, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng,
         bool with_bias = true) {
    weight = store.glorot(name + ".weight", in, out, rng);
    if (with_bias) bias = store.zeros(name + ".bias", 1, out);
  }

  Var operator()(Graph<S>& g, Var x) const {
    Var y = g.matmul(x, g.param(*weight));
    if (bias != nullptr) y = g.add_row(y, g.param(*bias));
    return y;
  }
};

template <typename S>
struct LayerNorm {
  Parameter<S>* gamma = nullptr;
  Parameter<S>* beta = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterStore<S>& store, const std::string& name, Eigen::Index width) {
    gamma = store.ones(name + ".gamma", 1, width);
    beta = store.zeros(name + ".beta", 1, width);
  }

  Var operator()(Graph<S>& g, Var x) const { return g.layer_norm(x, g.param(*gamma), g.param(*beta)); }
};

/// Multi-head scaled dot-product attention. `key_bias` (optional, 1 x keys)
/// is added to every score row; use a large negative value to mask keys.
template <typename S>
struct MultiHeadAttention {
  Linear<S> q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<S>& store, const std::string& name, Eigen::Index width, int num_heads,
                     std::mt19937_64& rng)
      : q(store, name + ".q", width, width, rng),
        k(store, name + ".k", width, width, rng),
        v(store, name + ".v", width, width, rng),
        o(store, name + ".o", width, width, rng),
        heads(num_heads) {
    if (width % num_heads != 0) throw std::invalid_argument("attention width must be divisible by heads");
  }

  Var operator()(Graph<S>& g, Var queries, Var memory, const Matrix<S>* key_bias = nullptr) const {
    Var qp = q(g, queries);
    Var kp = k(g, memory);
    Var vp = v(g, memory);
    const Eigen::Index width = g.cols(qp);
    const Eigen::Index dh = width / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    Var bias;
    if (key_bias != nullptr) bias = g.constant(key_bias->replicate(g.rows(qp), 1));
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Var qh = heads == 1 ? qp : g.slice_cols(qp, h * dh, dh);
      Var kh = heads == 1 ? kp : g.slice_cols(kp, h * dh, dh);
      Var vh = heads == 1 ? vp : g.slice_cols(vp, h * dh, dh);
      Var scores = g.scale(g.matmul_nt(qh, kh), scale);
      if (bias.valid()) scores = g.add(scores, bias);
      outs.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    Var merged = heads == 1 ? outs.front() : g.concat_cols(outs);
    return o(g, merged);
  }
};

template <typename S>
struct FeedForward {
  Linear<S> in, out;

  FeedForward() = default;
  FeedForward(ParameterStore<S>& store, const std::string& name, Eigen::Index width, Eigen::Index hidden,
              std::mt19937_64& rng)
      : in(store, name + ".in", width, hidden, rng), out(store, name + ".out", hidden, width, rng) {}

  Var operator()(Graph<S>& g, Var x) const { return out(g, g.gelu(in(g, x))); }
};

/// Pre-norm self-attention block with residual connections.
template <typename S>
struct EncoderLayer {
  LayerNorm<S> norm1, norm2;
  MultiHeadAttention<S> attn;
  FeedForward<S> ff;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore<S>& store, const std::string& name, Eigen::Index width, int heads, Eigen::Index hidden,
               std::mt19937_64& rng)
      : norm1(store, name + ".norm1", width),
        norm2(store, name + ".norm2", width),
        attn(store, name + ".attn", width, heads, rng),
        ff(store, name + ".ff", width, hidden, rng) {}

  Var operator()(Graph<S>& g, Var x, const Matrix<S>* key_bias = nullptr) const {
    Var h = norm1(g, x);
    x = g.add(x, attn(g, h, h, key_bias));
    return g.add(x, ff(g, norm2(g, x)));
  }
};

/// Pre-norm block: self-attention, cross-attention against `memory`, feed-forward.
template <typename S>
struct DecoderLayer {
  LayerNorm<S> norm1, norm2, norm3;
  MultiHeadAttention<S> self_attn, cross_attn;
  FeedForward<S> ff;

  DecoderLayer() = default;
  DecoderLayer(ParameterStore<S>& store, const std::string& name, Eigen::Index width, int heads, Eigen::Index hidden,
               std::mt19937_64& rng)
      : norm1(store, name + ".norm1", width),
        norm2(store, name + ".norm2", width),
        norm3(store, name + ".norm3", width),
        self_attn(store, name + ".self_attn", width, heads, rng),
        cross_attn(store, name + ".cross_attn", width, heads, rng),
        ff(store, name + ".ff", width, hidden, rng) {}

  Var operator()(Graph<S>& g, Var x, Var memory) const {
    Var h = norm1(g, x);
    x = g.add(x, self_attn(g, h, h));
    x = g.add(x, cross_attn(g, norm2(g, x), memory));
    return g.add(x, ff(g, norm3(g, x)));
  }
};

/// Standard sinusoidal table, rows = positions.
template <typename S>
Matrix<S> sinusoidal_encoding(Eigen::Index positions, Eigen::Index width, double base = 10000.0) {
  Matrix<S> pe(positions, width);
  for (Eigen::Index p = 0; p < positions; ++p) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double freq = std::pow(base, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(p) * freq;
      pe(p, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

/// Sinusoidal embedding of a single (possibly fractional) scalar position.
template <typename S>
Matrix<S> sinusoidal_embedding(double position, Eigen::Index width, double base = 10000.0) {
  Matrix<S> pe(1, width);
  const Eigen::Index half = width / 2;
  for (Eigen::Index i = 0; i < width; ++i) {
    const Eigen::Index k = i % std::max<Eigen::Index>(half, 1);
    const double freq = std::pow(base, -static_cast<double>(k) / static_cast<double>(std::max<Eigen::Index>(half, 1)));
    pe(0, i) = static_cast<S>(i < half ? std::sin(position * freq) : std::cos(position * freq));
  }
  return pe;
}

}  // namespace gesturegen::nn
