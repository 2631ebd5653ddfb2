#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gesturegen::motion {

inline constexpr int kRootParent = -1;

/// Kinematic tree. Joint 0 is the root; every other joint's parent has a
/// lower index.
struct Skeleton {
  int joint_count = 0;
  std::vector<int> parents;
  Eigen::MatrixX3d offsets;              // J x 3 bone offsets in meters
  std::array<int, 4> foot_joints{};      // left heel, left toe, right heel, right toe

  void validate() const {
    if (joint_count < 2) throw std::invalid_argument("skeleton needs at least two joints");
    if (static_cast<int>(parents.size()) != joint_count || offsets.rows() != joint_count) {
      throw std::invalid_argument("skeleton arrays do not match joint_count");
    }
    if (parents[0] != kRootParent) throw std::invalid_argument("joint 0 must be the root");
    for (int j = 1; j < joint_count; ++j) {
      const int p = parents[static_cast<std::size_t>(j)];
      if (p < 0 || p >= j) {
        throw std::invalid_argument("joint " + std::to_string(j) + " is not topologically ordered");
      }
    }
    if (!offsets.allFinite()) throw std::invalid_argument("skeleton offsets must be finite");
    for (int f : foot_joints) {
      if (f <= 0 || f >= joint_count) throw std::invalid_argument("foot joint index out of range");
    }
  }

  /// Per-frame width of the unified representation.
  [[nodiscard]] int feature_dim() const { return 12 * joint_count - 1; }

  bool operator==(const Skeleton& o) const {
    return joint_count == o.joint_count && parents == o.parents && foot_joints == o.foot_joints &&
           offsets.rows() == o.offsets.rows() && (offsets.array() == o.offsets.array()).all();
  }
};

inline constexpr int feature_dim_for(int joint_count) { return 12 * joint_count - 1; }

/// 55-joint body+face+hands layout (SMPL-X joint order).
inline Skeleton gesture_skeleton() {
  Skeleton s;
  s.joint_count = 55;
  s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 15, 15, 15};
  s.offsets.resize(55, 3);
  // clang-format off
  s.offsets.topRows(25) <<
       0.00,  0.00,  0.00,   // pelvis
       0.06, -0.09,  0.00,   // left hip
      -0.06, -0.09,  0.00,   // right hip
       0.00,  0.11,  0.00,   // spine1
       0.04, -0.38,  0.00,   // left knee
      -0.04, -0.38,  0.00,   // right knee
       0.00,  0.14,  0.00,   // spine2
       0.00, -0.40, -0.04,   // left ankle
       0.00, -0.40, -0.04,   // right ankle
       0.00,  0.06,  0.02,   // spine3
       0.02, -0.06,  0.12,   // left foot
      -0.02, -0.06,  0.12,   // right foot
       0.00,  0.21, -0.03,   // neck
       0.08,  0.12, -0.02,   // left collar
      -0.08,  0.12, -0.02,   // right collar
       0.00,  0.09,  0.05,   // head
       0.11,  0.03, -0.01,   // left shoulder
      -0.11,  0.03, -0.01,   // right shoulder
       0.26,  0.00,  0.00,   // left elbow
      -0.26,  0.00,  0.00,   // right elbow
       0.25,  0.00,  0.00,   // left wrist
      -0.25,  0.00,  0.00,   // right wrist
       0.00,  0.02,  0.02,   // jaw
       0.03,  0.06,  0.08,   // left eye
      -0.03,  0.06,  0.08;   // right eye
  // clang-format on
  // Fingers: index, middle, pinky, ring, thumb; three phalanges each.
  const std::array<Eigen::Vector3d, 5> bases = {Eigen::Vector3d(0.090, 0.0, 0.030), Eigen::Vector3d(0.095, 0.0, 0.010),
                                                Eigen::Vector3d(0.080, 0.0, -0.030), Eigen::Vector3d(0.088, 0.0, -0.010),
                                                Eigen::Vector3d(0.030, -0.010, 0.040)};
  int j = 25;
  for (int side = 0; side < 2; ++side) {
    const int wrist = side == 0 ? 20 : 21;
    const double mirror = side == 0 ? 1.0 : -1.0;
    for (const auto& base : bases) {
      for (int k = 0; k < 3; ++k) {
        s.parents.push_back(k == 0 ? wrist : j - 1);
        Eigen::Vector3d off = k == 0 ? base : Eigen::Vector3d(0.03, 0.0, 0.0);
        off.x() *= mirror;
        s.offsets.row(j) = off.transpose();
        ++j;
      }
    }
  }
  s.foot_joints = {7, 10, 8, 11};
  return s;
}

/// Indices of the 22 body joints retained for captioning.
inline std::vector<int> caption_joint_map() {
  std::vector<int> m(22);
  for (int i = 0; i < 22; ++i) m[static_cast<std::size_t>(i)] = i;
  return m;
}

/// Skeleton induced by keeping `joint_map` joints. Each kept joint's parent
/// becomes its nearest kept ancestor.
inline Skeleton project_skeleton(const Skeleton& full, const std::vector<int>& joint_map) {
  if (joint_map.empty() || joint_map.front() != 0) {
    bool has_root = false;
    for (int j : joint_map) has_root = has_root || j == 0;
    throw std::invalid_argument(has_root ? "joint map must list the root first" : "joint map must include the root");
  }
  std::vector<int> position(static_cast<std::size_t>(full.joint_count), -1);
  for (std::size_t i = 0; i < joint_map.size(); ++i) {
    const int j = joint_map[i];
    if (j < 0 || j >= full.joint_count) throw std::invalid_argument("joint map index out of range");
    if (position[static_cast<std::size_t>(j)] != -1) throw std::invalid_argument("joint map has duplicates");
    position[static_cast<std::size_t>(j)] = static_cast<int>(i);
  }
  Skeleton s;
  s.joint_count = static_cast<int>(joint_map.size());
  s.offsets.resize(s.joint_count, 3);
  s.parents.assign(joint_map.size(), kRootParent);
  for (std::size_t i = 0; i < joint_map.size(); ++i) {
    const int j = joint_map[i];
    Eigen::Vector3d off = full.offsets.row(j).transpose();
    int p = full.parents[static_cast<std::size_t>(j)];
    while (p != kRootParent && position[static_cast<std::size_t>(p)] == -1) {
      off += full.offsets.row(p).transpose();
      p = full.parents[static_cast<std::size_t>(p)];
    }
    s.parents[i] = p == kRootParent ? kRootParent : position[static_cast<std::size_t>(p)];
    s.offsets.row(static_cast<Eigen::Index>(i)) = off.transpose();
  }
  for (std::size_t f = 0; f < 4; ++f) {
    const int mapped = position[static_cast<std::size_t>(full.foot_joints[f])];
    if (mapped < 0) throw std::invalid_argument("joint map drops a foot joint");
    s.foot_joints[f] = mapped;
  }
  s.validate();
  return s;
}

}  // namespace gesturegen::motion
