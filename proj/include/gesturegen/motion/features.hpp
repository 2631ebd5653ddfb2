#pragma once

// Unified per-frame motion features (12J-1 wide) and their inverse.
//
// Frame layout:
//   [0]                      root yaw angular velocity (rad/s)
//   [1], [2]                 root x / z linear velocity in the yaw-aligned frame (m/s)
//   [3]                      root height (m)
//   [4, 4+3(J-1))            non-root joint positions in the yaw-aligned root frame
//   next 3J                  joint velocities in the yaw-aligned frame (m/s)
//   next 6(J-1)              non-root local rotations, continuous 6D form
//   last 4                   foot contacts in {0, 1}
//
// Velocities at frame i are forward differences (i -> i+1) times fps; the
// final frame repeats the previous frame's velocity.

#include "gesturegen/motion/rotation.hpp"
#include "gesturegen/motion/skeleton.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace gesturegen::motion {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FeatureLayout {
  int joints = 0;

  explicit FeatureLayout(int j) : joints(j) {}

  [[nodiscard]] int root_angular() const { return 0; }
  [[nodiscard]] int root_linear_x() const { return 1; }
  [[nodiscard]] int root_linear_z() const { return 2; }
  [[nodiscard]] int root_height() const { return 3; }
  [[nodiscard]] int positions() const { return 4; }
  [[nodiscard]] int velocities() const { return positions() + 3 * (joints - 1); }
  [[nodiscard]] int rotations() const { return velocities() + 3 * joints; }
  [[nodiscard]] int contacts() const { return rotations() + 6 * (joints - 1); }
  [[nodiscard]] int width() const { return contacts() + 4; }
};

struct RawMotion {
  double fps = 20.0;
  Eigen::MatrixX3d root_positions;                 // T x 3
  std::vector<std::vector<Vec3>> joint_rotations;  // T x J axis-angle, local to parent

  [[nodiscard]] int frames() const { return static_cast<int>(root_positions.rows()); }
};

struct MotionSequence {
  double fps = 20.0;
  Skeleton skeleton;
  FeatureMatrix features;  // T x (12J - 1)

  [[nodiscard]] int frames() const { return static_cast<int>(features.rows()); }
  [[nodiscard]] int dim() const { return static_cast<int>(features.cols()); }

  void validate() const {
    skeleton.validate();
    if (fps <= 0.0) throw std::invalid_argument("fps must be positive");
    if (features.cols() != skeleton.feature_dim()) {
      throw std::invalid_argument("feature width must equal 12 * joint_count - 1");
    }
    if (!features.allFinite()) throw std::invalid_argument("features must be finite");
    const FeatureLayout lay(skeleton.joint_count);
    for (Eigen::Index t = 0; t < features.rows(); ++t) {
      for (int c = 0; c < 4; ++c) {
        const double v = features(t, lay.contacts() + c);
        if (v != 0.0 && v != 1.0) throw std::invalid_argument("foot contacts must be 0 or 1");
      }
    }
  }
};

struct ReprConfig {
  /// Foot speed below which a foot counts as planted: 0.02 m per frame at 20 fps.
  double contact_speed = 0.4;  // m/s
  double scale = 1.0;
  double yaw_offset = 0.0;  // radians, applied to the whole clip about +Y
};

/// Global kinematic state from which features are built.
struct KinematicState {
  std::vector<Eigen::MatrixX3d> positions;  // per frame, J x 3 global positions
  std::vector<double> yaw;                  // per frame root heading (unwrapped is fine)
  std::vector<std::vector<Mat3>> local_rotations;  // per frame, J local rotations (root entry unused)
};

namespace detail {

inline void require_finite(const RawMotion& raw) {
  if (!raw.root_positions.allFinite()) throw std::invalid_argument("root positions must be finite");
  for (const auto& frame : raw.joint_rotations) {
    for (const auto& aa : frame) {
      if (!aa.allFinite()) throw std::invalid_argument("joint rotations must be finite");
    }
  }
}

inline std::vector<bool> contacts_for(const KinematicState& st, const Skeleton& sk, double fps, double threshold,
                                      std::size_t t) {
  const std::size_t n = st.positions.size();
  const std::size_t a = t + 1 < n ? t : t - 1;
  std::vector<bool> c(4);
  for (std::size_t f = 0; f < 4; ++f) {
    const int j = sk.foot_joints[f];
    const double speed = (st.positions[a + 1].row(j) - st.positions[a].row(j)).norm() * fps;
    c[f] = speed < threshold;
  }
  return c;
}

}  // namespace detail

/// Builds features from global positions, headings and local rotations.
inline MotionSequence features_from_state(const KinematicState& st, const Skeleton& sk, double fps,
                                          const ReprConfig& cfg = {}) {
  const std::size_t n = st.positions.size();
  if (n < 2) throw std::invalid_argument("at least two frames are needed for velocities");
  const int J = sk.joint_count;
  const FeatureLayout lay(J);
  MotionSequence seq;
  seq.fps = fps;
  seq.skeleton = sk;
  seq.features = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), lay.width());
  for (std::size_t t = 0; t < n; ++t) {
    auto row = seq.features.row(static_cast<Eigen::Index>(t));
    const std::size_t a = t + 1 < n ? t : t - 1;  // velocity source frame
    const Mat3 to_local = yaw_matrix(-st.yaw[t]);
    const Mat3 to_local_a = yaw_matrix(-st.yaw[a]);
    const Eigen::MatrixX3d& p = st.positions[t];
    const Vec3 root = p.row(0).transpose();

    row(lay.root_angular()) = wrap_angle(st.yaw[a + 1] - st.yaw[a]) * fps;
    const Vec3 root_vel = to_local_a * (st.positions[a + 1].row(0) - st.positions[a].row(0)).transpose() * fps;
    row(lay.root_linear_x()) = root_vel.x();
    row(lay.root_linear_z()) = root_vel.z();
    row(lay.root_height()) = root.y();

    const Vec3 ground(root.x(), 0.0, root.z());
    for (int j = 1; j < J; ++j) {
      const Vec3 local = to_local * (p.row(j).transpose() - ground);
      row.segment<3>(lay.positions() + 3 * (j - 1)) = local.transpose();
    }
    for (int j = 0; j < J; ++j) {
      const Vec3 v = to_local_a * (st.positions[a + 1].row(j) - st.positions[a].row(j)).transpose() * fps;
      row.segment<3>(lay.velocities() + 3 * j) = v.transpose();
    }
    for (int j = 1; j < J; ++j) {
      row.segment<6>(lay.rotations() + 6 * (j - 1)) = matrix_to_6d(st.local_rotations[t][static_cast<std::size_t>(j)]).transpose();
    }
    const auto contact = detail::contacts_for(st, sk, fps, cfg.contact_speed, t);
    for (int f = 0; f < 4; ++f) row(lay.contacts() + f) = contact[static_cast<std::size_t>(f)] ? 1.0 : 0.0;
  }
  return seq;
}

/// Forward kinematics: global joint positions and rotations of one frame.
inline std::pair<Eigen::MatrixX3d, std::vector<Mat3>> forward_kinematics(const Skeleton& sk, const Vec3& root,
                                                                        const std::vector<Mat3>& local, double scale = 1.0) {
  const int J = sk.joint_count;
  Eigen::MatrixX3d pos(J, 3);
  std::vector<Mat3> global(static_cast<std::size_t>(J));
  global[0] = local[0];
  pos.row(0) = root.transpose();
  for (int j = 1; j < J; ++j) {
    const auto p = static_cast<std::size_t>(sk.parents[static_cast<std::size_t>(j)]);
    global[static_cast<std::size_t>(j)] = global[p] * local[static_cast<std::size_t>(j)];
    pos.row(j) = pos.row(static_cast<Eigen::Index>(p)) + (global[p] * sk.offsets.row(j).transpose() * scale).transpose();
  }
  return {pos, global};
}

inline MotionSequence to_unified_features(const RawMotion& raw, const Skeleton& sk, const ReprConfig& cfg = {}) {
  sk.validate();
  if (raw.fps <= 0.0) throw std::invalid_argument("fps must be positive");
  const int T = raw.frames();
  if (T < 2) throw std::invalid_argument("at least two frames are needed for velocities");
  if (static_cast<int>(raw.joint_rotations.size()) != T) throw std::invalid_argument("rotation frame count mismatch");
  detail::require_finite(raw);
  const Mat3 yaw_fix = yaw_matrix(cfg.yaw_offset);

  KinematicState st;
  st.positions.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& aa = raw.joint_rotations[static_cast<std::size_t>(t)];
    if (static_cast<int>(aa.size()) != sk.joint_count) throw std::invalid_argument("rotation joint count mismatch");
    std::vector<Mat3> local(aa.size());
    for (std::size_t j = 0; j < aa.size(); ++j) local[j] = axis_angle_to_matrix(aa[j]);
    local[0] = yaw_fix * local[0];
    const Vec3 root = yaw_fix * raw.root_positions.row(t).transpose() * cfg.scale;
    auto [pos, global] = forward_kinematics(sk, root, local, cfg.scale);
    st.positions.push_back(std::move(pos));
    st.yaw.push_back(yaw_of(global[0]));
    st.local_rotations.push_back(std::move(local));
  }
  return features_from_state(st, sk, raw.fps, cfg);
}

/// Integrated root heading per frame, starting at zero.
inline std::vector<double> recover_yaw(const MotionSequence& seq) {
  const FeatureLayout lay(seq.skeleton.joint_count);
  std::vector<double> yaw(static_cast<std::size_t>(seq.frames()), 0.0);
  for (int t = 1; t < seq.frames(); ++t) {
    yaw[static_cast<std::size_t>(t)] = yaw[static_cast<std::size_t>(t - 1)] + seq.features(t - 1, lay.root_angular()) / seq.fps;
  }
  return yaw;
}

/// Global joint positions, with frame 0's root at the origin (x, z) facing +Z.
inline std::vector<Eigen::MatrixX3d> recover_positions(const MotionSequence& seq) {
  seq.validate();
  const int J = seq.skeleton.joint_count;
  const FeatureLayout lay(J);
  const auto yaw = recover_yaw(seq);
  std::vector<Eigen::MatrixX3d> out;
  out.reserve(static_cast<std::size_t>(seq.frames()));
  Vec3 ground = Vec3::Zero();
  for (int t = 0; t < seq.frames(); ++t) {
    const auto row = seq.features.row(t);
    if (t > 0) {
      const auto prev = seq.features.row(t - 1);
      const Vec3 v(prev(lay.root_linear_x()), 0.0, prev(lay.root_linear_z()));
      ground += yaw_matrix(yaw[static_cast<std::size_t>(t - 1)]) * v / seq.fps;
    }
    const Mat3 to_world = yaw_matrix(yaw[static_cast<std::size_t>(t)]);
    Eigen::MatrixX3d p(J, 3);
    p.row(0) = Vec3(ground.x(), row(lay.root_height()), ground.z()).transpose();
    for (int j = 1; j < J; ++j) {
      const Vec3 local = row.segment<3>(lay.positions() + 3 * (j - 1)).transpose();
      p.row(j) = (to_world * local + ground).transpose();
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Local rotation matrices decoded from the 6D blocks (root entry is a pure yaw).
inline std::vector<std::vector<Mat3>> recover_local_rotations(const MotionSequence& seq) {
  const int J = seq.skeleton.joint_count;
  const FeatureLayout lay(J);
  const auto yaw = recover_yaw(seq);
  std::vector<std::vector<Mat3>> out(static_cast<std::size_t>(seq.frames()));
  for (int t = 0; t < seq.frames(); ++t) {
    auto& frame = out[static_cast<std::size_t>(t)];
    frame.resize(static_cast<std::size_t>(J));
    frame[0] = yaw_matrix(yaw[static_cast<std::size_t>(t)]);
    for (int j = 1; j < J; ++j) {
      const Vec6 v = seq.features.row(t).segment<6>(lay.rotations() + 6 * (j - 1)).transpose();
      frame[static_cast<std::size_t>(j)] = matrix_from_6d(v);
    }
  }
  return out;
}

inline MotionSequence project_to_caption_subset(const MotionSequence& seq, const std::vector<int>& joint_map) {
  const Skeleton sub = project_skeleton(seq.skeleton, joint_map);
  const FeatureLayout src(seq.skeleton.joint_count);
  const FeatureLayout dst(sub.joint_count);
  MotionSequence out;
  out.fps = seq.fps;
  out.skeleton = sub;
  out.features.resize(seq.features.rows(), dst.width());
  out.features.leftCols(4) = seq.features.leftCols(4);
  for (std::size_t i = 0; i < joint_map.size(); ++i) {
    const int j = joint_map[i];
    const int k = static_cast<int>(i);
    out.features.middleCols(dst.velocities() + 3 * k, 3) = seq.features.middleCols(src.velocities() + 3 * j, 3);
    if (k == 0) continue;
    out.features.middleCols(dst.positions() + 3 * (k - 1), 3) = seq.features.middleCols(src.positions() + 3 * (j - 1), 3);
    out.features.middleCols(dst.rotations() + 6 * (k - 1), 6) = seq.features.middleCols(src.rotations() + 6 * (j - 1), 6);
  }
  out.features.rightCols(4) = seq.features.rightCols(4);
  return out;
}

/// Resamples to `target_fps`, covering the original duration
/// (frames = floor((T-1) * target/fps) + 1).
inline MotionSequence resample_fps(const MotionSequence& seq, double target_fps, const ReprConfig& cfg = {}) {
  if (target_fps <= 0.0) throw std::invalid_argument("target fps must be positive");
  seq.validate();
  const int T = seq.frames();
  const double ratio = target_fps / seq.fps;
  const int out_frames = static_cast<int>(std::floor(static_cast<double>(T - 1) * ratio + 1e-9)) + 1;
  if (out_frames < 2) throw std::invalid_argument("resampled sequence would have fewer than two frames");
  const auto pos = recover_positions(seq);
  const auto yaw = recover_yaw(seq);
  const auto rot = recover_local_rotations(seq);
  const int J = seq.skeleton.joint_count;

  KinematicState st;
  for (int k = 0; k < out_frames; ++k) {
    const double src = static_cast<double>(k) / ratio;
    const int i0 = std::min(static_cast<int>(std::floor(src)), T - 1);
    const int i1 = std::min(i0 + 1, T - 1);
    const double w = std::clamp(src - i0, 0.0, 1.0);
    const auto a = static_cast<std::size_t>(i0);
    const auto b = static_cast<std::size_t>(i1);
    st.positions.push_back((1.0 - w) * pos[a] + w * pos[b]);
    st.yaw.push_back((1.0 - w) * yaw[a] + w * yaw[b]);
    std::vector<Mat3> local(static_cast<std::size_t>(J));
    local[0] = yaw_matrix(st.yaw.back());
    for (std::size_t j = 1; j < local.size(); ++j) {
      const Vec6 blend = (1.0 - w) * matrix_to_6d(rot[a][j]) + w * matrix_to_6d(rot[b][j]);
      local[j] = matrix_from_6d(blend);
    }
    st.local_rotations.push_back(std::move(local));
  }
  return features_from_state(st, seq.skeleton, target_fps, cfg);
}

struct PaddedMotion {
  MotionSequence sequence;
  std::vector<bool> valid;  // true for real frames
};

/// Truncates to the first `target_len` frames, or pads by repeating the last
/// frame with zero velocities (so feet in padded frames are planted).
inline PaddedMotion pad_or_truncate(const MotionSequence& seq, int target_len = 180) {
  if (target_len < 1) throw std::invalid_argument("target length must be at least 1");
  if (seq.frames() < 1) throw std::invalid_argument("cannot pad an empty sequence");
  PaddedMotion out;
  out.sequence.fps = seq.fps;
  out.sequence.skeleton = seq.skeleton;
  const int keep = std::min(seq.frames(), target_len);
  out.sequence.features.resize(target_len, seq.dim());
  out.sequence.features.topRows(keep) = seq.features.topRows(keep);
  out.valid.assign(static_cast<std::size_t>(target_len), false);
  std::fill(out.valid.begin(), out.valid.begin() + keep, true);
  if (keep < target_len) {
    const FeatureLayout lay(seq.skeleton.joint_count);
    Eigen::RowVectorXd pad = seq.features.row(keep - 1);
    pad(lay.root_angular()) = 0.0;
    pad(lay.root_linear_x()) = 0.0;
    pad(lay.root_linear_z()) = 0.0;
    pad.segment(lay.velocities(), 3 * seq.skeleton.joint_count).setZero();
    pad.tail(4).setOnes();
    for (int t = keep; t < target_len; ++t) out.sequence.features.row(t) = pad;
  }
  return out;
}

}  // namespace gesturegen::motion
