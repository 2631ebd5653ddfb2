#pragma once

// Request -> conditions -> DDIM -> VAE decode -> motion, plus exports.

#include "gesturegen/diffusion/ddim.hpp"
#include "gesturegen/diffusion/train.hpp"
#include "gesturegen/motion/container.hpp"
#include "gesturegen/pipeline/conditions.hpp"
#include "gesturegen/vae/gesture_vae.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

namespace gesturegen::pipeline {

struct GenerationRequest {
  std::vector<std::string> captions;
  std::optional<audio::Waveform> audio;
  int frames = 180;
  diffusion::GuidanceScales scales;
  std::uint64_t seed = 0;
  int inference_steps = 50;
};

struct GenerationResult {
  motion::MotionSequence motion;
  nlohmann::json manifest;
};

/// Contacts decoded as probabilities are cut at 0.5.
inline void threshold_contacts(motion::FeatureMatrix& f, int joints) {
  const motion::FeatureLayout lay(joints);
  for (Eigen::Index t = 0; t < f.rows(); ++t)
    for (int c = 0; c < 4; ++c) f(t, lay.contacts() + c) = f(t, lay.contacts() + c) >= 0.5 ? 1.0 : 0.0;
}

template <typename S>
class Generator {
 public:
  Generator(const vae::GestureVAE<S>& vae, const diffusion::Denoiser<S>& denoiser, double latent_scale,
            diffusion::NoiseSchedule schedule, ConditionBuilder& builder)
      : vae_(&vae), denoiser_(&denoiser), latent_scale_(latent_scale), schedule_(std::move(schedule)), builder_(&builder) {
    if (!(latent_scale > 0)) throw std::invalid_argument("generator: latent scale must be positive");
    if (vae.config().latent_tokens != denoiser.config().latent_tokens ||
        vae.config().latent_dim != denoiser.config().latent_dim) {
      throw std::invalid_argument("generator: VAE and denoiser latent shapes differ");
    }
  }

  [[nodiscard]] GenerationResult generate(const GenerationRequest& req) const {
    const int max_frames = vae_->config().max_frames;
    if (req.frames < 1 || req.frames > max_frames) {
      throw std::invalid_argument("generate: frames must lie in [1, " + std::to_string(max_frames) + "]");
    }
    const audio::Waveform* wave = req.audio ? &*req.audio : nullptr;
    const auto cs = builder_->for_request(req.captions, wave, max_frames);
    const diffusion::Availability avail{wave != nullptr, !req.captions.empty()};
    const diffusion::EpsFn model = [&](const diffusion::RowMatrix& z, int t, diffusion::GuidancePass pass) {
      return denoiser_->predict(z, t, diffusion::pass_conditions(cs, pass));
    };
    const auto z0 = diffusion::ddim_sample(model, avail, req.scales, schedule_, {req.inference_steps, 0.0}, req.seed,
                                           vae_->config().latent_tokens, vae_->config().latent_dim);
    vae::LatentVector z{z0 / latent_scale_};
    motion::FeatureMatrix f = vae_->decode(z, max_frames).topRows(req.frames);
    const motion::Skeleton sk = motion::gesture_skeleton();
    threshold_contacts(f, sk.joint_count);
    GenerationResult out;
    out.motion.fps = builder_->settings().fps;
    out.motion.skeleton = sk;
    out.motion.features = std::move(f);
    out.manifest = {{"seed", req.seed},
                    {"scales", req.scales},
                    {"frames", req.frames},
                    {"inference_steps", req.inference_steps},
                    {"schedule_hash", schedule_.hash()},
                    {"condition_hashes", condition_hashes(req.captions, wave)},
                    {"captions", req.captions},
                    {"has_audio", wave != nullptr},
                    {"latent_scale", latent_scale_},
                    {"output_hash", util::sha256_hex(motion::encode_container(out.motion))}};
    return out;
  }

 private:
  const vae::GestureVAE<S>* vae_;
  const diffusion::Denoiser<S>* denoiser_;
  double latent_scale_;
  diffusion::NoiseSchedule schedule_;
  ConditionBuilder* builder_;
};

/// One row per (frame, joint): frame,joint,x,y,z in meters.
inline void write_positions_csv(const std::filesystem::path& file, const motion::MotionSequence& seq) {
  const auto pos = motion::recover_positions(seq);
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "frame,joint,x,y,z\n" << std::fixed << std::setprecision(5);
  for (std::size_t t = 0; t < pos.size(); ++t)
    for (Eigen::Index j = 0; j < pos[t].rows(); ++j)
      out << t << ',' << j << ',' << pos[t](j, 0) << ',' << pos[t](j, 1) << ',' << pos[t](j, 2) << '\n';
}

/// Plain-text skeleton animation:
///   SKELANIM 1
///   fps <fps>
///   joints <J>
///   parents <p_0> ... <p_{J-1}>
///   frames <T>
///   then T lines of 3J numbers (x y z per joint, meters, +Y up).
inline void write_skeleton_animation(const std::filesystem::path& file, const motion::MotionSequence& seq) {
  const auto pos = motion::recover_positions(seq);
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "SKELANIM 1\nfps " << seq.fps << "\njoints " << seq.skeleton.joint_count << "\nparents";
  for (int p : seq.skeleton.parents) out << ' ' << p;
  out << "\nframes " << pos.size() << '\n' << std::fixed << std::setprecision(5);
  for (const auto& frame : pos) {
    for (Eigen::Index j = 0; j < frame.rows(); ++j) {
      out << (j == 0 ? "" : " ") << frame(j, 0) << ' ' << frame(j, 1) << ' ' << frame(j, 2);
    }
    out << '\n';
  }
}

}  // namespace gesturegen::pipeline
