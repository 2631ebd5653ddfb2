#pragma once

#include "gesturegen/nn/autograd.hpp"

#include <cmath>
#include <vector>

namespace gesturegen::nn {

struct AdamWSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

/// Decoupled weight decay Adam. Moments live on the Parameter itself.
template <typename S>
class AdamW {
 public:
  AdamW(std::vector<Parameter<S>*> params, AdamWSettings settings)
      : params_(std::move(params)), settings_(settings) {}

  /// Applies one update using the gradients accumulated so far, scaled by
  /// `grad_scale` (e.g. 1/batch for summed per-sample gradients).
  double step(double grad_scale = 1.0) {
    ++t_;
    double sq = 0.0;
    for (const auto* p : params_) sq += static_cast<double>(p->grad.squaredNorm());
    double gnorm = std::sqrt(sq) * grad_scale;
    double factor = grad_scale;
    if (settings_.clip_norm > 0.0 && gnorm > settings_.clip_norm) factor *= settings_.clip_norm / gnorm;

    const double b1 = settings_.beta1;
    const double b2 = settings_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const S lr = static_cast<S>(settings_.lr);
    const S decay = static_cast<S>(1.0 - settings_.lr * settings_.weight_decay);
    for (auto* p : params_) {
      const Matrix<S> g = p->grad * static_cast<S>(factor);
      p->m = p->m * static_cast<S>(b1) + g * static_cast<S>(1.0 - b1);
      p->v = p->v * static_cast<S>(b2) + g.cwiseProduct(g) * static_cast<S>(1.0 - b2);
      p->value *= decay;
      p->value.array() -= lr * (p->m.array() / static_cast<S>(c1)) /
                          ((p->v.array() / static_cast<S>(c2)).sqrt() + static_cast<S>(settings_.eps));
      p->zero_grad();
    }
    return gnorm;
  }

  [[nodiscard]] long steps() const { return t_; }
  AdamWSettings& settings() { return settings_; }

 private:
  std::vector<Parameter<S>*> params_;
  AdamWSettings settings_;
  long t_ = 0;
};

}  // namespace gesturegen::nn
