#pragma once

// Two-stage training on SampleRecords: VAE first, then the denoiser on
// scaled VAE posterior means with the VAE frozen.

#include "gesturegen/data/records.hpp"
#include "gesturegen/diffusion/train.hpp"
#include "gesturegen/pipeline/conditions.hpp"
#include "gesturegen/vae/gesture_vae.hpp"

#include <cmath>
#include <vector>

namespace gesturegen::pipeline {

inline std::vector<vae::TrainExample> vae_examples(const std::vector<data::SampleRecord>& records) {
  std::vector<vae::TrainExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::vector<bool> valid = r.valid.empty() ? std::vector<bool>(static_cast<std::size_t>(r.motion.frames()), true) : r.valid;
    out.push_back({r.motion.features, std::move(valid)});
  }
  return out;
}

/// Posterior means of every record under a trained VAE.
template <typename S>
std::vector<diffusion::RowMatrix> encode_means(const vae::GestureVAE<S>& model, const std::vector<data::SampleRecord>& records) {
  std::vector<diffusion::RowMatrix> out;
  out.reserve(records.size());
  for (const auto& ex : vae_examples(records)) out.emplace_back(model.encode(ex.features, ex.valid).mu);
  return out;
}

/// 1 / (standard deviation over every latent entry).
inline double fit_latent_scale(const std::vector<diffusion::RowMatrix>& latents) {
  if (latents.empty()) throw std::invalid_argument("fit_latent_scale: no latents");
  double sum = 0;
  double sq = 0;
  double n = 0;
  for (const auto& z : latents) {
    sum += z.sum();
    sq += z.squaredNorm();
    n += static_cast<double>(z.size());
  }
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(sq / n - mean * mean, 0.0));
  if (!(sd > 1e-8)) throw std::runtime_error("fit_latent_scale: latents have no spread");
  return 1.0 / sd;
}

inline std::vector<diffusion::DiffusionExample> diffusion_examples(const std::vector<diffusion::RowMatrix>& latents,
                                                                   double scale,
                                                                   const std::vector<data::SampleRecord>& records,
                                                                   ConditionBuilder& builder) {
  if (latents.size() != records.size()) throw std::invalid_argument("diffusion_examples: latent count mismatch");
  std::vector<diffusion::DiffusionExample> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back({latents[i] * scale, builder.for_record(records[i])});
  return out;
}

}  // namespace gesturegen::pipeline
