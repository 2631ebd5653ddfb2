#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <stdexcept>

namespace gesturegen::diffusion {

/// s1 weights the audio-only prediction, s2 the caption-only prediction.
struct GuidanceScales {
  double s1 = 7.0;
  double s2 = 0.75;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GuidanceScales, s1, s2)

/// s1 * eps_audio + s2 * eps_caption + (1 - s1 - s2) * eps_uncond.
template <typename M>
M cfg_combine(const M& eps_audio, const M& eps_caption, const M& eps_uncond, const GuidanceScales& s) {
  if (eps_audio.rows() != eps_uncond.rows() || eps_audio.cols() != eps_uncond.cols() ||
      eps_caption.rows() != eps_uncond.rows() || eps_caption.cols() != eps_uncond.cols()) {
    throw std::invalid_argument("cfg_combine: shape mismatch");
  }
  return s.s1 * eps_audio + s.s2 * eps_caption + (1.0 - s.s1 - s.s2) * eps_uncond;
}

enum class GuidancePass { audio, caption, unconditional };

}  // namespace gesturegen::diffusion
