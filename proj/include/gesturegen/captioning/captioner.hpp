#pragma once

// Caption backends. The kinematic stub turns coarse motion statistics into
// sentences from a fixed phrase grammar; the remote client talks to an HTTP
// caption service.

#include "gesturegen/motion/container.hpp"
#include "gesturegen/motion/features.hpp"
#include "gesturegen/util/hash.hpp"
#include "gesturegen/util/http.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::captioning {

class CaptionerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  /// `segment` is a 22-joint sequence. Throws CaptionerError on failure.
  virtual std::string caption(const std::string& prompt, const motion::MotionSequence& segment) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Summary statistics the stub captioner reads off a segment.
struct SegmentStats {
  double travel_forward = 0;  // metres along the initial heading
  double travel_left = 0;
  double turn = 0;            // radians, positive turns left
  double height_drop = 0;     // max root height drop below frame 0 (m)
  double leg_speed = 0;       // mean joint speed per group (m/s)
  double left_arm_speed = 0;
  double right_arm_speed = 0;
  bool left_above_head = false;
  bool right_above_head = false;
  double arm_beats_per_second = 0;
  double duration = 0;
};

inline SegmentStats segment_stats(const motion::MotionSequence& seg) {
  if (seg.skeleton.joint_count != 22) throw CaptionerError("kinematic captioner expects the 22-joint subset");
  SegmentStats s;
  const int T = seg.frames();
  s.duration = T / seg.fps;
  const auto pos = motion::recover_positions(seg);
  const auto yaw = motion::recover_yaw(seg);
  const Eigen::RowVector3d d = pos.back().row(0) - pos.front().row(0);
  s.travel_forward = d.z();
  s.travel_left = d.x();
  s.turn = yaw.back() - yaw.front();
  for (int t = 0; t < T; ++t) s.height_drop = std::max(s.height_drop, pos.front()(0, 1) - pos[static_cast<std::size_t>(t)](0, 1));

  const std::array<int, 8> legs = {1, 2, 4, 5, 7, 8, 10, 11};
  const std::array<int, 4> left_arm = {13, 16, 18, 20};
  const std::array<int, 4> right_arm = {14, 17, 19, 21};
  std::vector<double> arm_speed(static_cast<std::size_t>(std::max(T - 1, 0)), 0.0);
  auto group_speed = [&](const auto& group, int t) {
    double v = 0;
    for (int j : group) {
      const auto a = pos[static_cast<std::size_t>(t)].row(j) - pos[static_cast<std::size_t>(t)].row(0);
      const auto b = pos[static_cast<std::size_t>(t + 1)].row(j) - pos[static_cast<std::size_t>(t + 1)].row(0);
      v += (b - a).norm() * seg.fps;
    }
    return v / static_cast<double>(group.size());
  };
  for (int t = 0; t + 1 < T; ++t) {
    s.leg_speed += group_speed(legs, t);
    const double l = group_speed(left_arm, t);
    const double r = group_speed(right_arm, t);
    s.left_arm_speed += l;
    s.right_arm_speed += r;
    arm_speed[static_cast<std::size_t>(t)] = l + r;
  }
  if (T > 1) {
    s.leg_speed /= (T - 1);
    s.left_arm_speed /= (T - 1);
    s.right_arm_speed /= (T - 1);
  }
  for (int t = 0; t < T; ++t) {
    const auto& p = pos[static_cast<std::size_t>(t)];
    s.left_above_head = s.left_above_head || p(20, 1) > p(15, 1);
    s.right_above_head = s.right_above_head || p(21, 1) > p(15, 1);
  }
  // interior minima of a lightly smoothed arm-speed curve
  int minima = 0;
  std::vector<double> sm(arm_speed.size(), 0.0);
  for (std::size_t t = 0; t < arm_speed.size(); ++t) {
    const double a = arm_speed[t > 0 ? t - 1 : t];
    const double c = arm_speed[t + 1 < arm_speed.size() ? t + 1 : t];
    sm[t] = 0.25 * a + 0.5 * arm_speed[t] + 0.25 * c;
  }
  for (std::size_t t = 1; t + 1 < sm.size(); ++t) {
    if (sm[t] < sm[t - 1] && sm[t] <= sm[t + 1]) ++minima;
  }
  s.arm_beats_per_second = s.duration > 0 ? minima / s.duration : 0.0;
  return s;
}

/// Deterministic caption stub. Moving segments get sentences of at least
/// five words; near-static segments get a four-word sentence.
class KinematicCaptioner final : public Captioner {
 public:
  double static_speed = 0.1;   // m/s
  double travel_min = 0.3;     // m
  double turn_min = 0.6;       // rad
  double squat_min = 0.15;     // m

  std::string caption(const std::string& /*prompt*/, const motion::MotionSequence& segment) override {
    ++calls_;
    return describe(segment_stats(segment));
  }

  [[nodiscard]] std::string name() const override { return "stub"; }
  [[nodiscard]] long calls() const { return calls_; }

  [[nodiscard]] std::string describe(const SegmentStats& s) const {
    const double travel = std::hypot(s.travel_forward, s.travel_left);
    if (travel >= travel_min) {
      std::string dir;
      if (std::abs(s.travel_forward) >= std::abs(s.travel_left)) {
        dir = s.travel_forward > 0 ? "forward" : "backward";
      } else {
        dir = s.travel_left > 0 ? "to the left" : "to the right";
      }
      const double speed = s.duration > 0 ? travel / s.duration : 0.0;
      return "a person walks " + dir + (speed > 1.0 ? " quickly" : " slowly");
    }
    if (std::abs(s.turn) >= turn_min) {
      return std::string("a person turns to the ") + (s.turn > 0 ? "left" : "right") + " in place";
    }
    if (s.height_drop >= squat_min) return "a person squats down and stands back up";
    const double arms = std::max(s.left_arm_speed, s.right_arm_speed);
    if (std::max(arms, s.leg_speed) < static_speed) return "the person stands still";

    std::string who;
    const double lo = std::min(s.left_arm_speed, s.right_arm_speed);
    const bool both = lo > 0.6 * arms;
    if (both) {
      who = "both";
    } else {
      who = s.left_arm_speed > s.right_arm_speed ? "left" : "right";
    }
    const bool above = both ? (s.left_above_head && s.right_above_head)
                            : (who == "left" ? s.left_above_head : s.right_above_head);
    if (above) {
      return "a person raises " + std::string(both ? "both hands" : "the " + who + " hand") + " above the head";
    }
    std::string rhythm;
    if (s.arm_beats_per_second >= 1.5) {
      rhythm = " in a fast rhythm";
    } else if (s.arm_beats_per_second >= 1.0) {
      rhythm = " at a steady pace";
    } else {
      rhythm = " in a slow rhythm";
    }
    return "a person moves " + std::string(both ? "both arms" : "the " + who + " arm") + " up and down" + rhythm;
  }

 private:
  long calls_ = 0;
};

/// Client for POST /v1/caption {prompt, motion, fps} -> {caption}.
class RemoteCaptioner final : public Captioner {
 public:
  explicit RemoteCaptioner(util::RemoteSettings cfg) : cfg_(std::move(cfg)) {}

  std::string caption(const std::string& prompt, const motion::MotionSequence& segment) override {
    const nlohmann::json body = {{"prompt", prompt},
                                 {"motion", util::base64_encode(motion::encode_feature_payload(segment.features))},
                                 {"fps", segment.fps}};
    nlohmann::json reply;
    try {
      reply = util::post_json(cfg_, "/v1/caption", body);
    } catch (const util::RemoteError& e) {
      throw CaptionerError(e.what());
    }
    if (!reply.contains("caption") || !reply["caption"].is_string()) throw CaptionerError("response has no caption");
    return reply["caption"].get<std::string>();
  }

  [[nodiscard]] std::string name() const override { return "remote"; }

 private:
  util::RemoteSettings cfg_;
};

}  // namespace gesturegen::captioning
