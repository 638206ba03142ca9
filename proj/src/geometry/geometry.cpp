#include "gdp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gdp::geometry {

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

UnitQuaternion quat_normalize(const Vec4& q) {
  const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidQuaternion("cannot normalize quaternion with norm " + std::to_string(n));
  const double s = (q[0] < 0.0 ? -1.0 : 1.0) / n;
  return UnitQuaternion({q[0] * s, q[1] * s, q[2] * s, q[3] * s});
}

Vec3 quat_log(const UnitQuaternion& q) {
  const double n = std::sqrt(q.x() * q.x() + q.y() * q.y() + q.z() * q.z());
  if (n == 0.0) return {0.0, 0.0, 0.0};
  // atan2(n, w) equals arccos(w) on the unit sphere and keeps full precision
  // near the identity.
  const double angle = std::atan2(n, q.w());
  return {q.x() / n * angle, q.y() / n * angle, q.z() / n * angle};
}

UnitQuaternion quat_exp(const Vec3& r) {
  const double n = norm(r);
  if (n == 0.0) return UnitQuaternion();
  const double s = std::sin(n) / n;
  return quat_normalize({std::cos(n), r[0] * s, r[1] * s, r[2] * s});
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_normalize({a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z(),
                         a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
                         a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
                         a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w()});
}

UnitQuaternion quat_from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = norm(axis);
  if (n == 0.0 || angle_rad == 0.0) return UnitQuaternion();
  const double s = std::sin(angle_rad / 2.0) / n;
  return quat_normalize({std::cos(angle_rad / 2.0), axis[0] * s, axis[1] * s, axis[2] * s});
}

std::array<double, 9> quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

namespace {

// Shepperd's method: pick the largest diagonal combination for stability.
UnitQuaternion matrix_to_quat(const std::vector<double>& m) {
  const double tr = m[0] + m[4] + m[8];
  Vec4 q;
  if (tr > 0.0) {
    const double s = std::sqrt(tr + 1.0) * 2.0;
    q = {0.25 * s, (m[7] - m[5]) / s, (m[2] - m[6]) / s, (m[3] - m[1]) / s};
  } else if (m[0] > m[4] && m[0] > m[8]) {
    const double s = std::sqrt(1.0 + m[0] - m[4] - m[8]) * 2.0;
    q = {(m[7] - m[5]) / s, 0.25 * s, (m[1] + m[3]) / s, (m[2] + m[6]) / s};
  } else if (m[4] > m[8]) {
    const double s = std::sqrt(1.0 + m[4] - m[0] - m[8]) * 2.0;
    q = {(m[2] - m[6]) / s, (m[1] + m[3]) / s, 0.25 * s, (m[5] + m[7]) / s};
  } else {
    const double s = std::sqrt(1.0 + m[8] - m[0] - m[4]) * 2.0;
    q = {(m[3] - m[1]) / s, (m[2] + m[6]) / s, (m[5] + m[7]) / s, 0.25 * s};
  }
  return quat_normalize(q);
}

void require_size(const std::vector<double>& v, std::size_t n, RotationRepr repr) {
  if (v.size() != n)
    throw std::invalid_argument(std::string(to_string(repr)) + " encoding needs " + std::to_string(n) +
                                " values, got " + std::to_string(v.size()));
}

}  // namespace

RotationRepr parse_rotation_repr(std::string_view name) {
  if (name == "quaternion") return RotationRepr::Quaternion;
  if (name == "log_quaternion") return RotationRepr::LogQuaternion;
  if (name == "rotation_matrix") return RotationRepr::RotationMatrix;
  if (name == "axis_angle") return RotationRepr::AxisAngle;
  throw std::invalid_argument("unknown rotation representation: " + std::string(name));
}

std::string_view to_string(RotationRepr repr) {
  switch (repr) {
    case RotationRepr::Quaternion: return "quaternion";
    case RotationRepr::LogQuaternion: return "log_quaternion";
    case RotationRepr::RotationMatrix: return "rotation_matrix";
    case RotationRepr::AxisAngle: return "axis_angle";
  }
  return "unknown";
}

int rotation_dim(RotationRepr repr) {
  switch (repr) {
    case RotationRepr::Quaternion: return 4;
    case RotationRepr::RotationMatrix: return 9;
    case RotationRepr::LogQuaternion:
    case RotationRepr::AxisAngle: return 3;
  }
  return 0;
}

std::vector<double> rotation_encode(const UnitQuaternion& q, RotationRepr repr) {
  switch (repr) {
    case RotationRepr::Quaternion: return {q.w(), q.x(), q.y(), q.z()};
    case RotationRepr::LogQuaternion: {
      const Vec3 r = quat_log(q);
      return {r[0], r[1], r[2]};
    }
    case RotationRepr::RotationMatrix: {
      const auto m = quat_to_matrix(q);
      return {m.begin(), m.end()};
    }
    case RotationRepr::AxisAngle: {
      const Vec3 r = quat_log(q);
      return {2.0 * r[0], 2.0 * r[1], 2.0 * r[2]};
    }
  }
  return {};
}

UnitQuaternion rotation_decode(const std::vector<double>& v, RotationRepr repr) {
  require_size(v, static_cast<std::size_t>(rotation_dim(repr)), repr);
  switch (repr) {
    case RotationRepr::Quaternion: return quat_normalize({v[0], v[1], v[2], v[3]});
    case RotationRepr::LogQuaternion: return quat_exp({v[0], v[1], v[2]});
    case RotationRepr::RotationMatrix: return matrix_to_quat(v);
    case RotationRepr::AxisAngle: return quat_exp({v[0] / 2.0, v[1] / 2.0, v[2] / 2.0});
  }
  return UnitQuaternion();
}

Pose pose_relative(const Pose& p_i, const Pose& p_j) {
  Pose out;
  for (int k = 0; k < 3; ++k) {
    out.d[k] = p_j.d[k] - p_i.d[k];
    out.r[k] = p_j.r[k] - p_i.r[k];
  }
  return out;
}

PoseError pose_error(const Pose& pred, const Pose& target) {
  const Vec3 dd{pred.d[0] - target.d[0], pred.d[1] - target.d[1], pred.d[2] - target.d[2]};
  const UnitQuaternion a = quat_exp(pred.r);
  const UnitQuaternion b = quat_exp(target.r);
  double dot = 0.0;
  for (std::size_t k = 0; k < 4; ++k) dot += a[k] * b[k];
  dot = std::min(1.0, std::abs(dot));
  return {norm(dd), 360.0 / std::numbers::pi * std::acos(dot)};
}

}  // namespace gdp::geometry
