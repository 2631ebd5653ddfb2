#pragma once

// Jerk / acceleration and beat consistency.

#include "gesturegen/audio/waveform.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gesturegen::metrics {

using Trajectory = std::vector<Eigen::MatrixX3d>;  // per frame, J x 3 positions (m)

struct JerkAccel {
  double jerk = 0;   // m/s^3
  double accel = 0;  // m/s^2
};

/// Mean norm of second (central) and third (forward) differences, scaled by
/// fps^2 and fps^3, over joints and frames.
inline JerkAccel jerk_accel(const Trajectory& p, double fps) {
  const auto T = p.size();
  if (T < 4) throw std::invalid_argument("jerk_accel: need at least 4 frames");
  if (fps <= 0) throw std::invalid_argument("jerk_accel: fps must be positive");
  const Eigen::Index J = p.front().rows();
  double acc = 0;
  double jerk = 0;
  for (std::size_t t = 1; t + 1 < T; ++t) {
    const Eigen::MatrixX3d a = (p[t + 1] - 2.0 * p[t] + p[t - 1]) * (fps * fps);
    acc += a.rowwise().norm().sum();
  }
  for (std::size_t t = 0; t + 3 < T; ++t) {
    const Eigen::MatrixX3d j = (p[t + 3] - 3.0 * p[t + 2] + 3.0 * p[t + 1] - p[t]) * (fps * fps * fps);
    jerk += j.rowwise().norm().sum();
  }
  return {jerk / (static_cast<double>(T - 3) * static_cast<double>(J)), acc / (static_cast<double>(T - 2) * static_cast<double>(J))};
}

struct BeatSettings {
  double sigma = 0.1;           // seconds
  double audio_hop = 0.01;      // onset envelope resolution (s)
  double audio_window = 0.02;
  double onset_threshold = 0.3; // fraction of the envelope maximum
  double min_gap = 0.1;         // seconds between accepted audio peaks
  double motion_smoothing = 1.0;  // Gaussian sigma in frames; 0 disables
  double rest_fraction = 0.02;    // speeds below this share of the peak count as still
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BeatSettings, sigma, audio_hop, audio_window, onset_threshold, min_gap, motion_smoothing, rest_fraction)

/// Peak times (s) of the onset envelope.
inline std::vector<double> audio_beats(const audio::Waveform& w, const BeatSettings& s = {}) {
  if (w.empty()) throw std::invalid_argument("audio_beats: empty waveform");
  const auto env = audio::onset_envelope(audio::frame_log_energy(w, s.audio_hop, s.audio_window));
  const double peak = *std::max_element(env.begin(), env.end());
  std::vector<double> out;
  if (peak <= 0) return out;
  double last = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < env.size(); ++k) {
    if (env[k] < s.onset_threshold * peak || env[k] < env[k - 1] || env[k] < env[k + 1]) continue;
    const double t = static_cast<double>(k) * s.audio_hop + 0.5 * s.audio_window;
    if (t - last < s.min_gap) continue;
    out.push_back(t);
    last = t;
  }
  return out;
}

/// Mean joint speed per frame from central differences; frames 1..T-2.
inline std::vector<double> mean_joint_speed(const Trajectory& p, double fps) {
  std::vector<double> out;
  for (std::size_t t = 1; t + 1 < p.size(); ++t) {
    out.push_back(((p[t + 1] - p[t - 1]) * (0.5 * fps)).rowwise().norm().mean());
  }
  return out;
}

/// Times (s) of local minima of the (smoothed) mean joint speed.
inline std::vector<double> motion_beats(const Trajectory& p, double fps, const BeatSettings& s = {}) {
  auto speed = mean_joint_speed(p, fps);
  if (s.motion_smoothing > 0 && speed.size() > 2) {
    const int radius = static_cast<int>(std::ceil(3 * s.motion_smoothing));
    std::vector<double> sm(speed.size());
    for (std::size_t i = 0; i < speed.size(); ++i) {
      double acc = 0;
      double wsum = 0;
      for (int d = -radius; d <= radius; ++d) {
        const auto j = static_cast<long>(i) + d;
        if (j < 0 || j >= static_cast<long>(speed.size())) continue;
        const double w = std::exp(-0.5 * d * d / (s.motion_smoothing * s.motion_smoothing));
        acc += w * speed[static_cast<std::size_t>(j)];
        wsum += w;
      }
      sm[i] = acc / wsum;
    }
    speed.swap(sm);
  }
  // Near-zero speeds are snapped to zero so a clip coming to rest yields one
  // minimum at the start of the still plateau instead of at the smoothing tail.
  const double floor = s.rest_fraction * (speed.empty() ? 0.0 : *std::max_element(speed.begin(), speed.end()));
  for (double& v : speed)
    if (v < floor) v = 0.0;
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < speed.size(); ++i) {
    if (speed[i] < speed[i - 1] && speed[i] <= speed[i + 1]) out.push_back(static_cast<double>(i + 1) / fps);
  }
  return out;
}

/// Mean over motion beats of exp(-d^2 / (2 sigma^2)), d the distance to the
/// nearest audio beat. Defined as 0 when either side has no beats.
inline double beat_consistency_times(const std::vector<double>& motion, const std::vector<double>& audio, double sigma) {
  if (sigma <= 0) throw std::invalid_argument("beat_consistency: sigma must be positive");
  if (motion.empty() || audio.empty()) {
    spdlog::warn("beat consistency: no {} beats detected; reporting 0", motion.empty() ? "motion" : "audio");
    return 0.0;
  }
  double sum = 0;
  for (double tm : motion) {
    double best = std::numeric_limits<double>::infinity();
    for (double ta : audio) best = std::min(best, (tm - ta) * (tm - ta));
    sum += std::exp(-best / (2 * sigma * sigma));
  }
  return sum / static_cast<double>(motion.size());
}

struct BeatConsistency {
  double raw = 0;
  double scaled = 0;  // raw x 10, the "BC x 10^-1" reporting convention
};

inline BeatConsistency beat_consistency(const Trajectory& positions, double fps, const audio::Waveform& w,
                                        const BeatSettings& s = {}) {
  if (positions.empty()) throw std::invalid_argument("beat_consistency: empty motion");
  const double bc = beat_consistency_times(motion_beats(positions, fps, s), audio_beats(w, s), s.sigma);
  return {bc, 10.0 * bc};
}

}  // namespace gesturegen::metrics
