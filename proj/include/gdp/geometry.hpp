#pragma once

// Quaternion and 6-DoF pose algebra for pose regression.
//
// Rotations are carried as canonical unit quaternions (w >= 0, so the double
// cover is resolved) and regressed in log-quaternion form: the 3-vector
// axis * arccos(w), whose norm is at most pi/2 for canonical input.

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gdp::geometry {

using Vec3 = std::array<double, 3>;
using Vec4 = std::array<double, 4>;

class InvalidQuaternion : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unit quaternion (q1, q2, q3, q4) = (w, x, y, z) with q1 >= 0.
class UnitQuaternion {
 public:
  // Identity rotation.
  UnitQuaternion() = default;

  const Vec4& coeffs() const { return q_; }
  double w() const { return q_[0]; }
  double x() const { return q_[1]; }
  double y() const { return q_[2]; }
  double z() const { return q_[3]; }
  double operator[](std::size_t i) const { return q_[i]; }

 private:
  friend UnitQuaternion quat_normalize(const Vec4& q);
  explicit UnitQuaternion(const Vec4& q) : q_(q) {}
  Vec4 q_{1.0, 0.0, 0.0, 0.0};
};

struct Pose {
  Vec3 d{};  // translation, meters
  Vec3 r{};  // log-quaternion rotation

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct PoseError {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

// q / |q| with the sign chosen so that q1 >= 0. Throws InvalidQuaternion on a
// zero or non-finite input.
UnitQuaternion quat_normalize(const Vec4& q);

// axis * arccos(q1); the zero vector when the vector part vanishes.
Vec3 quat_log(const UnitQuaternion& q);

// (cos|r|, sin|r| r/|r|), canonicalised. Identity for r = 0.
UnitQuaternion quat_exp(const Vec3& r);

// Hamilton product, canonicalised.
UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);
UnitQuaternion quat_from_axis_angle(const Vec3& axis, double angle_rad);
// 3x3 row-major rotation matrix.
std::array<double, 9> quat_to_matrix(const UnitQuaternion& q);

enum class RotationRepr { Quaternion, LogQuaternion, RotationMatrix, AxisAngle };

RotationRepr parse_rotation_repr(std::string_view name);
std::string_view to_string(RotationRepr repr);
int rotation_dim(RotationRepr repr);

// Encodings: quaternion (4), log-quaternion (3), row-major matrix (9) and
// so(3) axis-angle (3, angle = 2 * |log q|).
std::vector<double> rotation_encode(const UnitQuaternion& q, RotationRepr repr);
// Inverse of rotation_encode. Inputs that are not exactly on the manifold
// (raw network outputs) are projected to the nearest canonical rotation.
UnitQuaternion rotation_decode(const std::vector<double>& v, RotationRepr repr);

// Componentwise p_j - p_i on both translation and log-rotation.
Pose pose_relative(const Pose& p_i, const Pose& p_j);

// Euclidean translation error and the angle between the two rotations,
// (360/pi) * arccos(|<q_pred, q_target>|) degrees.
PoseError pose_error(const Pose& pred, const Pose& target);

double norm(const Vec3& v);

}  // namespace gdp::geometry
