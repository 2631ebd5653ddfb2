#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace gesturegen::motion {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

inline Vec3 matrix_to_axis_angle(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

/// Rotation by `yaw` radians about +Y (vertical).
inline Mat3 yaw_matrix(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

/// Heading of a rotation: the angle about +Y of the rotated +Z axis projected
/// onto the ground plane.
inline double yaw_of(const Mat3& r) {
  const Vec3 fwd = r * Vec3::UnitZ();
  return std::atan2(fwd.x(), fwd.z());
}

inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::fmod(a + pi, 2.0 * pi);
  if (a < 0) a += 2.0 * pi;
  return a - pi;
}

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Continuous 6D form: the first two columns of the rotation matrix.
inline Vec6 matrix_to_6d(const Mat3& r) {
  Vec6 v;
  v << r.col(0), r.col(1);
  return v;
}

/// Gram-Schmidt of the two stored columns; the third is their cross product.
inline Mat3 matrix_from_6d(const Vec6& v) {
  Vec3 a = v.head<3>();
  Vec3 b = v.tail<3>();
  const double na = a.norm();
  if (na < 1e-12) return Mat3::Identity();
  a /= na;
  b -= a * a.dot(b);
  const double nb = b.norm();
  if (nb < 1e-12) {
    // Degenerate second column: pick any vector orthogonal to the first.
    b = a.unitOrthogonal();
  } else {
    b /= nb;
  }
  Mat3 r;
  r.col(0) = a;
  r.col(1) = b;
  r.col(2) = a.cross(b);
  return r;
}

}  // namespace gesturegen::motion
