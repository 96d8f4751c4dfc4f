#pragma once

// Muscle path geometry: straight segments through waypoints, closed-form
// wrapping over spheres and cylinders, moment arms and joint torques.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "musculo/common.hpp"
#include "musculo/kinematics.hpp"
#include "musculo/model.hpp"

namespace musculo {

struct WrapResult {
  double length = 0.0;
  double arc_angle = 0.0;  // 0 when straight
  bool wrapped = false;
  int winding = 0;  // cylinder only: +1 right-handed about the axis, -1 otherwise
};

namespace detail {

inline double segment_point_distance(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 d = b - a;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (a + t * d - p).norm();
}

// Tangent-arc-tangent around a circle of radius r centered at the origin,
// given only the endpoint distances and the angle between them.
inline double wrap_arc(double d1, double d2, double phi, double r) {
  const double theta = phi - std::acos(r / d1) - std::acos(r / d2);
  return std::max(theta, 0.0);
}

inline double safe_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

inline double tangent_length(double d, double r) { return std::sqrt(std::max(d * d - r * r, 0.0)); }

// Sites within this distance of tangency are treated as straight.
inline constexpr double kTangencyTolerance = 1e-12;

}  // namespace detail

inline WrapResult wrap_sphere(const Vec3& p1, const Vec3& p2, const Vec3& center, double r) {
  const Vec3 a = p1 - center;
  const Vec3 b = p2 - center;
  const double d1 = a.norm();
  const double d2 = b.norm();
  if (d1 <= r || d2 <= r) throw DataError("wrap_sphere: path endpoint inside the sphere");
  WrapResult res;
  res.length = (p2 - p1).norm();
  if (detail::segment_point_distance(p1, p2, center) >= r - detail::kTangencyTolerance) return res;
  const double theta = detail::wrap_arc(d1, d2, detail::safe_angle(a, b), r);
  res.length = detail::tangent_length(d1, r) + detail::tangent_length(d2, r) + r * theta;
  res.arc_angle = theta;
  res.wrapped = true;
  return res;
}

// Wrap over an infinite cylinder. The planar problem in the plane normal to
// the axis is the circle wrap; axial travel is spread uniformly along the
// planar path, which makes the wrapped part a helix.
inline WrapResult wrap_cylinder(const Vec3& p1, const Vec3& p2, const Vec3& center,
                                const Vec3& axis_in, double r) {
  const Vec3 axis = axis_in.normalized();
  const Vec3 a = p1 - center;
  const Vec3 b = p2 - center;
  const double z1 = a.dot(axis);
  const double z2 = b.dot(axis);
  const Vec3 a_r = a - z1 * axis;
  const Vec3 b_r = b - z2 * axis;
  const double d1 = a_r.norm();
  const double d2 = b_r.norm();
  if (d1 <= r || d2 <= r) throw DataError("wrap_cylinder: path endpoint radially inside the cylinder");
  WrapResult res;
  res.length = (p2 - p1).norm();
  if (detail::segment_point_distance(a_r, b_r, Vec3::Zero()) >= r - detail::kTangencyTolerance) return res;
  // The shorter way round subtends the unsigned angle phi <= pi.
  const double phi = detail::safe_angle(a_r, b_r);
  const double theta = detail::wrap_arc(d1, d2, phi, r);
  const double planar = detail::tangent_length(d1, r) + detail::tangent_length(d2, r) + r * theta;
  const double dz = z2 - z1;
  res.length = std::sqrt(planar * planar + dz * dz);
  res.arc_angle = theta;
  res.wrapped = true;
  // Ties (phi == pi) go to the right-handed winding.
  res.winding = a_r.cross(b_r).dot(axis) >= 0.0 ? 1 : -1;
  return res;
}

struct SegmentResult {
  double length = 0.0;
  bool wrapped = false;
  double arc_angle = 0.0;
};

struct PathResult {
  double total_length = 0.0;
  std::vector<SegmentResult> segments;
  double lengthening_speed = 0.0;  // m/s, filled when velocities are known
};

inline PathResult path_length(const Model& model, const FrameSet& f, const MusclePath& path) {
  if (path.sites.size() < 2) throw DataError("muscle path needs at least two sites");
  PathResult res;
  const int nseg = static_cast<int>(path.sites.size()) - 1;
  res.segments.reserve(nseg);
  for (int s = 0; s < nseg; ++s) {
    const Vec3& p1 = f.site_position[path.sites[s]];
    const Vec3& p2 = f.site_position[path.sites[s + 1]];
    SegmentResult seg;
    if (const WrapAssignment* w = path.wrap_for(s)) {
      const WrapGeom& g = model.wrap_geoms[w->geom];
      const Mat3& rot = f.body_rotation[g.body];
      const Vec3 c = f.body_position[g.body] + rot * g.center;
      const WrapResult wr = g.kind == WrapKind::sphere ? wrap_sphere(p1, p2, c, g.radius)
                                                       : wrap_cylinder(p1, p2, c, rot * g.axis, g.radius);
      seg = {wr.length, wr.wrapped, wr.arc_angle};
    } else {
      seg.length = (p2 - p1).norm();
    }
    res.total_length += seg.length;
    res.segments.push_back(seg);
  }
  return res;
}

inline double path_length(const Model& model, const VecX& q, const MusclePath& path) {
  return path_length(model, forward_kinematics(model, q), path).total_length;
}

inline constexpr double kMomentArmStep = 1e-5;

struct MomentArms {
  VecX arms;  // dL/dq per joint, m (m/m for slides)
  std::vector<bool> one_sided;  // joint sat at a limit, one-sided difference used
};

// Central differences of path length with respect to each joint in the
// path's span; joints outside the span get exactly 0.
inline MomentArms moment_arms(const Model& model, const VecX& q, const MusclePath& path,
                              double h = kMomentArmStep) {
  check_dimensions(model, q, "moment_arms");
  const int n = model.joint_count();
  const auto span = model.path_span(path);
  MomentArms out{VecX::Zero(n), std::vector<bool>(n, false)};
  VecX work = q;
  for (int j = 0; j < n; ++j) {
    if (!span[j]) continue;
    const Joint& joint = model.joints[j];
    const double lo = q[j] - h;
    const double hi = q[j] + h;
    if (lo < joint.lower || hi > joint.upper) {
      out.one_sided[j] = true;
      const double base = path_length(model, q, path);
      if (hi <= joint.upper) {
        work[j] = hi;
        out.arms[j] = (path_length(model, work, path) - base) / h;
      } else if (lo >= joint.lower) {
        work[j] = lo;
        out.arms[j] = (base - path_length(model, work, path)) / h;
      }  // locked joint: arm stays 0
    } else {
      work[j] = hi;
      const double up = path_length(model, work, path);
      work[j] = lo;
      const double down = path_length(model, work, path);
      out.arms[j] = (up - down) / (2.0 * h);
    }
    work[j] = q[j];
  }
  return out;
}

// Moment arms of every muscle, sharing forward kinematics across muscles:
// column m holds muscle m's arms.
inline MatX moment_arm_matrix(const Model& model, const VecX& q, double h = kMomentArmStep) {
  const int n = model.joint_count();
  const int nm = model.muscle_count();
  MatX arms = MatX::Zero(n, nm);
  std::vector<std::vector<bool>> spans;
  spans.reserve(nm);
  std::vector<bool> any(n, false);
  for (const auto& m : model.muscles) {
    spans.push_back(model.path_span(m.path));
    for (int j = 0; j < n; ++j) any[j] = any[j] || spans.back()[j];
  }
  auto lengths = [&](const VecX& qq) {
    const FrameSet f = forward_kinematics(model, qq);
    VecX l(nm);
    for (int m = 0; m < nm; ++m) l[m] = path_length(model, f, model.muscles[m].path).total_length;
    return l;
  };
  VecX work = q;
  std::optional<VecX> base;
  for (int j = 0; j < n; ++j) {
    if (!any[j]) continue;
    const Joint& joint = model.joints[j];
    VecX col;
    if (q[j] - h >= joint.lower && q[j] + h <= joint.upper) {
      work[j] = q[j] + h;
      const VecX up = lengths(work);
      work[j] = q[j] - h;
      col = (up - lengths(work)) / (2.0 * h);
    } else {
      if (!base) base = lengths(q);
      if (q[j] + h <= joint.upper) {
        work[j] = q[j] + h;
        col = (lengths(work) - *base) / h;
      } else if (q[j] - h >= joint.lower) {
        work[j] = q[j] - h;
        col = (*base - lengths(work)) / h;
      } else {
        col = VecX::Zero(nm);
      }
    }
    work[j] = q[j];
    for (int m = 0; m < nm; ++m) arms(j, m) = spans[m][j] ? col[m] : 0.0;
  }
  return arms;
}

// tau_j = sum_m -arm(j, m) * force_m. Pulling shortens the path, so a
// negative dL/dq produces positive torque.
inline VecX joint_torques(const VecX& forces, const MatX& arms) {
  if (arms.cols() != forces.size()) throw DataError("joint_torques: dimension mismatch");
  return -(arms * forces);
}

}  // namespace musculo
