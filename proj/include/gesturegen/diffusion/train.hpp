#pragma once

#include "gesturegen/diffusion/denoiser.hpp"
#include "gesturegen/diffusion/guidance.hpp"
#include "gesturegen/nn/optim.hpp"
#include "gesturegen/vae/gesture_vae.hpp"

#include <functional>
#include <numeric>
#include <vector>

namespace gesturegen::diffusion {

/// The condition set seen by one guidance pass.
inline conditioning::ConditionSet pass_conditions(const conditioning::ConditionSet& cs, GuidancePass pass) {
  switch (pass) {
    case GuidancePass::audio: return cs.with_masks(true, false);
    case GuidancePass::caption: return cs.with_masks(false, true);
    case GuidancePass::unconditional: return cs.with_masks(true, true);
  }
  return cs;
}

struct DiffusionExample {
  RowMatrix z0;  // scaled latent, n x d
  conditioning::ConditionSet conditions;
};

struct DiffusionTrainSettings {
  int epochs = 2000;
  int batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 0.0;
  double clip_norm = 1.0;
  double mask_prob = 0.1;
  std::uint64_t seed = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DiffusionTrainSettings, epochs, batch_size, lr, weight_decay, clip_norm, mask_prob, seed)

struct DiffusionEpochRecord {
  int epoch = 0;
  double loss = 0;
};

template <typename S>
std::vector<DiffusionEpochRecord> train_diffusion(Denoiser<S>& model, const std::vector<DiffusionExample>& data,
                                                  const NoiseSchedule& schedule, const DiffusionTrainSettings& settings,
                                                  const std::function<void(const DiffusionEpochRecord&)>& on_epoch = {}) {
  if (data.empty()) throw std::invalid_argument("train_diffusion: empty dataset");
  nn::AdamW<S> opt(model.parameters().all(),
                   {.lr = settings.lr, .weight_decay = settings.weight_decay, .clip_norm = settings.clip_norm});
  std::mt19937_64 rng(settings.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  auto eps_model = [&model](Graph<S>& g, Var z, int t, const conditioning::ConditionSet& cs) {
    return model.forward(g, z, t, cs);
  };
  std::vector<DiffusionEpochRecord> history;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    DiffusionEpochRecord rec{epoch + 1, 0.0};
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(settings.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(settings.batch_size));
      for (std::size_t b = start; b < stop; ++b) {
        const auto& ex = data[order[b]];
        Graph<S> g;
        Var loss = diffusion_loss(g, eps_model, ex.z0, ex.conditions, rng, schedule, settings.mask_prob);
        const double value = g.scalar(loss);
        if (!std::isfinite(value)) {
          throw vae::TrainingDiverged("diffusion loss became non-finite at epoch " + std::to_string(epoch + 1));
        }
        rec.loss += value;
        g.backward(loss);
      }
      opt.step(1.0 / static_cast<double>(stop - start));
    }
    rec.loss /= static_cast<double>(data.size());
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

}  // namespace gesturegen::diffusion
