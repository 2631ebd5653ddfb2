#pragma once

// Procedural desk-scale corpora.
//
// gesture: 9 s at 30 fps. One or both arms oscillate as A cos(pi t / b), so
//   joint speed has minima exactly at t = k b; the 16 kHz audio carries a
//   click at every k b over band-limited noise. b comes from three tempo
//   classes. Some clips fall silent and still for the last few seconds.
// motion: 20 fps locomotion / reach / squat primitives with captions drawn
//   from a small grammar keyed on the action label.

#include "gesturegen/audio/waveform.hpp"
#include "gesturegen/data/records.hpp"
#include "gesturegen/motion/features.hpp"
#include "gesturegen/motion/skeleton.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace gesturegen::data {

inline constexpr std::array<double, 3> kBeatPeriods = {0.55, 0.8, 1.15};  // seconds between beats

struct GestureScript {
  int tempo_class = 0;
  double period = 0.55;
  int arms = 2;  // 0 left, 1 right, 2 both
  double amplitude = 0.5;
  double rest_from = 1e9;  // seconds; motion and clicks stop here
  double heading = 0.0;
};

inline const std::vector<std::string>& motion_actions() {
  static const std::vector<std::string> actions = {"walk_forward", "walk_backward", "turn_left", "turn_right",
                                                   "raise_right_hand", "raise_left_hand", "squat"};
  return actions;
}

namespace detail {

inline motion::RawMotion rest_pose(int frames, double fps, double heading) {
  const int J = 55;
  motion::RawMotion raw;
  raw.fps = fps;
  raw.root_positions = Eigen::MatrixX3d::Zero(frames, 3);
  raw.root_positions.col(1).setConstant(0.95);
  raw.joint_rotations.assign(static_cast<std::size_t>(frames), std::vector<motion::Vec3>(J, motion::Vec3::Zero()));
  for (auto& f : raw.joint_rotations) {
    f[0] = motion::Vec3(0, heading, 0);
    f[16] = motion::Vec3(0, 0, -1.2);  // arms hang
    f[17] = motion::Vec3(0, 0, 1.2);
  }
  return raw;
}

inline audio::Waveform click_track(double duration, const std::vector<double>& beats, std::mt19937_64& rng,
                                   int sample_rate = 16000) {
  audio::Waveform w;
  w.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  w.samples.assign(n, 0.0f);
  std::normal_distribution<double> noise(0.0, 1.0);
  double lp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lp = 0.9 * lp + 0.1 * noise(rng);  // one-pole low-pass noise
    w.samples[i] = static_cast<float>(0.02 * lp);
  }
  const auto click_len = static_cast<std::size_t>(0.03 * sample_rate);
  for (double b : beats) {
    const auto start = static_cast<std::size_t>(std::llround(b * sample_rate));
    for (std::size_t k = 0; k < click_len && start + k < n; ++k) {
      const double t = static_cast<double>(k) / sample_rate;
      w.samples[start + k] += static_cast<float>(0.6 * std::exp(-t / 0.008) * std::sin(2 * std::numbers::pi * 1000.0 * t));
    }
  }
  return w;
}

}  // namespace detail

inline GestureScript draw_gesture_script(std::mt19937_64& rng) {
  GestureScript s;
  s.tempo_class = std::uniform_int_distribution<int>(0, 2)(rng);
  s.period = kBeatPeriods[static_cast<std::size_t>(s.tempo_class)];
  s.arms = std::uniform_int_distribution<int>(0, 2)(rng);
  s.amplitude = std::uniform_real_distribution<double>(0.4, 0.7)(rng);
  s.heading = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
  if (std::bernoulli_distribution(0.25)(rng)) s.rest_from = std::ceil(6.0 / s.period) * s.period;
  return s;
}

/// Beat times (s) of a script within [0, duration).
inline std::vector<double> script_beats(const GestureScript& s, double duration) {
  std::vector<double> out;
  for (int k = 0; k * s.period < duration - 1e-9; ++k) {
    const double t = k * s.period;
    if (t <= s.rest_from + 1e-9) out.push_back(t);
  }
  return out;
}

inline SampleRecord synth_gesture(const std::string& clip_id, std::mt19937_64& rng, double duration = 9.0,
                                  double fps = 30.0) {
  const GestureScript s = draw_gesture_script(rng);
  const int frames = static_cast<int>(std::llround(duration * fps));
  auto raw = detail::rest_pose(frames, fps, s.heading);
  for (int f = 0; f < frames; ++f) {
    const double t = std::min(f / fps, s.rest_from);
    const double c = s.amplitude * std::cos(std::numbers::pi * t / s.period);
    auto& rot = raw.joint_rotations[static_cast<std::size_t>(f)];
    if (s.arms != 1) {
      rot[16] = motion::Vec3(0, 0, -0.9 + c);
      rot[18] = motion::Vec3(0, 0.6 + 0.4 * c, 0);
    }
    if (s.arms != 0) {
      rot[17] = motion::Vec3(0, 0, 0.9 - c);
      rot[19] = motion::Vec3(0, -0.6 - 0.4 * c, 0);
    }
    rot[9] = motion::Vec3(0.05 * c, 0, 0);
  }
  SampleRecord r;
  r.clip_id = clip_id;
  r.tag = DatasetTag::gesture;
  r.motion = motion::to_unified_features(raw, motion::gesture_skeleton());
  r.audio = detail::click_track(duration, script_beats(s, duration), rng);
  r.label = "tempo" + std::to_string(s.tempo_class);
  return r;
}

inline std::string motion_caption(const std::string& action, double speed, std::mt19937_64& rng) {
  static const std::array<const char*, 4> subjects = {"a person", "someone", "a man", "a woman"};
  const std::string who = subjects[std::uniform_int_distribution<std::size_t>(0, subjects.size() - 1)(rng)];
  if (action == "walk_forward") return who + " walks forward " + (speed > 1.1 ? "quickly" : "slowly");
  if (action == "walk_backward") return who + " takes a few steps backward";
  if (action == "turn_left") return who + " turns around to the left";
  if (action == "turn_right") return who + " turns around to the right";
  if (action == "raise_right_hand") return who + " raises the right hand above the head";
  if (action == "raise_left_hand") return who + " raises the left hand above the head";
  return who + " squats down and stands back up";
}

inline SampleRecord synth_motion(const std::string& clip_id, std::mt19937_64& rng, int min_frames = 100,
                                 int max_frames = 180, double fps = 20.0) {
  const auto& actions = motion_actions();
  const std::string action = actions[std::uniform_int_distribution<std::size_t>(0, actions.size() - 1)(rng)];
  const int frames = std::uniform_int_distribution<int>(min_frames, max_frames)(rng);
  const double heading = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
  const double speed = std::uniform_real_distribution<double>(0.7, 1.5)(rng);
  const double cadence = std::uniform_real_distribution<double>(1.6, 2.2)(rng);  // steps per second
  auto raw = detail::rest_pose(frames, fps, heading);
  Eigen::Vector3d root(0, 0.95, 0);
  double yaw = heading;
  for (int f = 0; f < frames; ++f) {
    const double t = f / fps;
    auto& rot = raw.joint_rotations[static_cast<std::size_t>(f)];
    const double ramp = std::min(1.0, t / 0.5);  // ease in over half a second
    const double swing = 0.45 * ramp * std::sin(std::numbers::pi * cadence * t);
    if (action == "walk_forward" || action == "walk_backward") {
      const double dir = action == "walk_forward" ? 1.0 : -0.6;
      rot[1] = motion::Vec3(swing, 0, 0);
      rot[2] = motion::Vec3(-swing, 0, 0);
      rot[4] = motion::Vec3(0.3 * ramp * (1 + std::sin(std::numbers::pi * cadence * t + 1)), 0, 0);
      rot[5] = motion::Vec3(0.3 * ramp * (1 - std::sin(std::numbers::pi * cadence * t + 1)), 0, 0);
      rot[16] = motion::Vec3(-0.5 * swing, 0, -1.2);
      rot[17] = motion::Vec3(0.5 * swing, 0, 1.2);
      if (f > 0) root += dir * speed * ramp / fps * Eigen::Vector3d(std::sin(yaw), 0, std::cos(yaw));
      root.y() = 0.95 + 0.02 * std::abs(std::sin(std::numbers::pi * cadence * t));
    } else if (action == "turn_left" || action == "turn_right") {
      const double rate = (action == "turn_left" ? 1.0 : -1.0) * 1.2 * speed;
      if (f > 0) yaw += rate * ramp / fps;
      rot[1] = motion::Vec3(0.2 * swing, 0, 0);
      rot[2] = motion::Vec3(-0.2 * swing, 0, 0);
    } else if (action == "raise_right_hand" || action == "raise_left_hand") {
      const double lift = 0.5 - 0.5 * std::cos(std::numbers::pi * std::min(1.0, t / (1.0 / speed + 0.5)));
      if (action == "raise_right_hand") {
        rot[17] = motion::Vec3(0, 0, 1.2 - 2.6 * lift);
      } else {
        rot[16] = motion::Vec3(0, 0, -1.2 + 2.6 * lift);
      }
    } else {  // squat
      const double depth = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * 0.5 * speed * t);
      root.y() = 0.95 - 0.3 * depth;
      rot[1] = motion::Vec3(-1.2 * depth, 0, 0);
      rot[2] = motion::Vec3(-1.2 * depth, 0, 0);
      rot[4] = motion::Vec3(2.0 * depth, 0, 0);
      rot[5] = motion::Vec3(2.0 * depth, 0, 0);
      rot[7] = motion::Vec3(-0.8 * depth, 0, 0);
      rot[8] = motion::Vec3(-0.8 * depth, 0, 0);
      rot[16] = motion::Vec3(-1.0 * depth, 0, -1.2);
      rot[17] = motion::Vec3(-1.0 * depth, 0, 1.2);
    }
    rot[0] = motion::Vec3(0, yaw, 0);
    raw.root_positions.row(f) = root.transpose();
  }
  SampleRecord r;
  r.clip_id = clip_id;
  r.tag = DatasetTag::motion;
  r.motion = motion::to_unified_features(raw, motion::gesture_skeleton());
  r.global_caption = motion_caption(action, speed, rng);
  r.label = action;
  return r;
}

/// `count` clips of one kind; identical for identical (seed, count, kind).
inline std::vector<SampleRecord> synth_corpus(std::uint64_t seed, int count, DatasetTag kind) {
  if (count < 1) throw std::invalid_argument("synth_corpus: count must be positive");
  std::vector<SampleRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(i) * 7919ULL + (kind == DatasetTag::gesture ? 1 : 2));
    char id[32];
    std::snprintf(id, sizeof(id), "%s_%05d", kind == DatasetTag::gesture ? "gesture" : "motion", i);
    out.push_back(kind == DatasetTag::gesture ? synth_gesture(id, rng) : synth_motion(id, rng));
  }
  return out;
}

}  // namespace gesturegen::data
