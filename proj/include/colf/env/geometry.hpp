#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace colf::env {

using Vec2 = Eigen::Vector2d;

struct Pose2 {
  double x = 0;
  double y = 0;
  double yaw = 0;

  Vec2 position() const { return {x, y}; }
  Vec2 heading() const { return {std::cos(yaw), std::sin(yaw)}; }
};

inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  a = std::fmod(a + kPi, 2 * kPi);
  if (a < 0) a += 2 * kPi;
  return a - kPi;
}

// Expresses the world point `p` in the planar frame of `frame`.
inline Vec2 to_frame(const Pose2& frame, const Vec2& p) { return rotate(p - frame.position(), -frame.yaw); }

/**
 * Penetration of a disc into an oriented rectangle.
 *
 * `normal` is the unit direction that moves the disc out of the rectangle
 * (pointing from the rectangle towards the disc), `depth` the distance it
 * must move, and `contact` the rectangle boundary point closest to the disc
 * centre. depth <= 0 means no overlap.
 */
struct DiscRectContact {
  double depth = 0;
  Vec2 normal = Vec2::Zero();
  Vec2 contact = Vec2::Zero();
};

inline DiscRectContact disc_rect_contact(const Vec2& center, double radius, const Pose2& rect, const Vec2& half) {
  const Vec2 local = to_frame(rect, center);
  DiscRectContact out;
  const bool inside = std::abs(local.x()) <= half.x() && std::abs(local.y()) <= half.y();
  Vec2 closest;
  Vec2 n_local;
  if (!inside) {
    closest = {std::clamp(local.x(), -half.x(), half.x()), std::clamp(local.y(), -half.y(), half.y())};
    const Vec2 d = local - closest;
    const double dist = d.norm();
    out.depth = radius - dist;
    n_local = d / dist;
  } else {
    // Centre inside: leave through the nearest face.
    const double gap_x = half.x() - std::abs(local.x());
    const double gap_y = half.y() - std::abs(local.y());
    if (gap_x <= gap_y) {
      const double sx = local.x() >= 0 ? 1.0 : -1.0;
      n_local = {sx, 0};
      closest = {sx * half.x(), local.y()};
      out.depth = radius + gap_x;
    } else {
      const double sy = local.y() >= 0 ? 1.0 : -1.0;
      n_local = {0, sy};
      closest = {local.x(), sy * half.y()};
      out.depth = radius + gap_y;
    }
  }
  out.normal = rotate(n_local, rect.yaw);
  out.contact = rect.position() + rotate(closest, rect.yaw);
  return out;
}

}  // namespace colf::env
