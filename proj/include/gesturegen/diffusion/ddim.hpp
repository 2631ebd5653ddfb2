#pragma once

// DDIM sampling with dual-scale classifier-free guidance.

#include "gesturegen/diffusion/guidance.hpp"
#include "gesturegen/diffusion/schedule.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace gesturegen::diffusion {

/// Noise prediction for latent z at step t under one guidance pass.
using EpsFn = std::function<RowMatrix(const RowMatrix& z, int t, GuidancePass pass)>;

struct Availability {
  bool audio = true;
  bool caption = true;
};

/// Uniform-stride subsequence T, T - s, ..., s with s = T / steps.
inline std::vector<int> ddim_timesteps(int train_steps, int inference_steps) {
  if (inference_steps < 1 || inference_steps > train_steps) {
    throw std::invalid_argument("inference steps must lie in [1, training steps]");
  }
  const int stride = train_steps / inference_steps;
  std::vector<int> out;
  for (int i = 0; i < inference_steps; ++i) out.push_back(train_steps - i * stride);
  return out;
}

/// Guided prediction; a modality absent from the request reuses the
/// unconditional pass in place of its own term.
inline RowMatrix guided_eps(const EpsFn& model, const RowMatrix& z, int t, Availability avail, const GuidanceScales& s) {
  const RowMatrix uncond = model(z, t, GuidancePass::unconditional);
  const RowMatrix audio = avail.audio ? model(z, t, GuidancePass::audio) : uncond;
  const RowMatrix caption = avail.caption ? model(z, t, GuidancePass::caption) : uncond;
  return cfg_combine(audio, caption, uncond, s);
}

struct DdimSettings {
  int inference_steps = 50;
  double eta = 0.0;
};

/// Starts from N(0, I) noise drawn with `seed` and returns z0_hat.
inline RowMatrix ddim_sample(const EpsFn& model, Availability avail, const GuidanceScales& scales,
                             const NoiseSchedule& schedule, const DdimSettings& settings, std::uint64_t seed,
                             Eigen::Index rows, Eigen::Index cols) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowMatrix z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  const auto steps = ddim_timesteps(schedule.steps(), settings.inference_steps);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int t = steps[i];
    const int prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    const double ab = schedule.abar(t);
    const double ab_prev = schedule.abar(prev);
    const RowMatrix eps = guided_eps(model, z, t, avail, scales);
    const RowMatrix z0 = (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
    const double sigma =
        settings.eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(std::max(0.0, 1.0 - ab / ab_prev));
    z = std::sqrt(ab_prev) * z0 + std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma)) * eps;
    if (sigma > 0) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] += sigma * normal(rng);
    }
  }
  return z;
}

}  // namespace gesturegen::diffusion
