#pragma once

// Transformer stacks with U-Net style long skips: for L layers, the first
// L/2 are "down" layers whose outputs are saved; layer L-1-k receives
// x + W_k * skip_k before running. An odd L leaves one middle layer unpaired.

#include "gesturegen/nn/layers.hpp"

#include <string>
#include <vector>

namespace gesturegen::nn {

template <typename S>
class SkipEncoderStack {
 public:
  SkipEncoderStack() = default;
  SkipEncoderStack(ParameterStore<S>& store, const std::string& name, int layers, Eigen::Index width, int heads,
                   Eigen::Index hidden, std::mt19937_64& rng, bool long_skips = true)
      : long_skips_(long_skips) {
    for (int i = 0; i < layers; ++i) {
      layers_.emplace_back(store, name + ".layer" + std::to_string(i), width, heads, hidden, rng);
    }
    if (long_skips_) {
      for (int k = 0; k < layers / 2; ++k) skips_.emplace_back(store, name + ".skip" + std::to_string(k), width, width, rng);
    }
    norm_ = LayerNorm<S>(store, name + ".final_norm", width);
  }

  Var operator()(Graph<S>& g, Var x, const Matrix<S>* key_bias = nullptr) const {
    const int L = static_cast<int>(layers_.size());
    std::vector<Var> saved;
    for (int i = 0; i < L; ++i) {
      const int paired = L - 1 - i;
      if (long_skips_ && i > paired && paired < static_cast<int>(skips_.size())) {
        x = g.add(x, skips_[static_cast<std::size_t>(paired)](g, saved[static_cast<std::size_t>(paired)]));
      }
      x = layers_[static_cast<std::size_t>(i)](g, x, key_bias);
      if (long_skips_ && i < L / 2) saved.push_back(x);
    }
    return norm_(g, x);
  }

  [[nodiscard]] int depth() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<EncoderLayer<S>> layers_;
  std::vector<Linear<S>> skips_;
  LayerNorm<S> norm_;
  bool long_skips_ = true;
};

template <typename S>
class SkipDecoderStack {
 public:
  SkipDecoderStack() = default;
  SkipDecoderStack(ParameterStore<S>& store, const std::string& name, int layers, Eigen::Index width, int heads,
                   Eigen::Index hidden, std::mt19937_64& rng, bool long_skips = true)
      : long_skips_(long_skips) {
    for (int i = 0; i < layers; ++i) {
      layers_.emplace_back(store, name + ".layer" + std::to_string(i), width, heads, hidden, rng);
    }
    if (long_skips_) {
      for (int k = 0; k < layers / 2; ++k) skips_.emplace_back(store, name + ".skip" + std::to_string(k), width, width, rng);
    }
    norm_ = LayerNorm<S>(store, name + ".final_norm", width);
  }

  Var operator()(Graph<S>& g, Var x, Var memory) const {
    const int L = static_cast<int>(layers_.size());
    std::vector<Var> saved;
    for (int i = 0; i < L; ++i) {
      const int paired = L - 1 - i;
      if (long_skips_ && i > paired && paired < static_cast<int>(skips_.size())) {
        x = g.add(x, skips_[static_cast<std::size_t>(paired)](g, saved[static_cast<std::size_t>(paired)]));
      }
      x = layers_[static_cast<std::size_t>(i)](g, x, memory);
      if (long_skips_ && i < L / 2) saved.push_back(x);
    }
    return norm_(g, x);
  }

  [[nodiscard]] int depth() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<DecoderLayer<S>> layers_;
  std::vector<Linear<S>> skips_;
  LayerNorm<S> norm_;
  bool long_skips_ = true;
};

}  // namespace gesturegen::nn
