#pragma once

// Shared fixtures for the test suites: programmatic model builders, mesh
// generators and reference implementations that deliberately avoid the
// library's own code paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "musculo/model.hpp"
#include "musculo/kinematics.hpp"
#include "musculo/mesh.hpp"
#include "musculo/mocap.hpp"
#include "musculo/rng.hpp"

namespace musculo::testing {

inline Body make_body(const std::string& name, int parent, const Vec3& offset, double mass, const Vec3& com,
                      const Mat3& inertia) {
  Body b;
  b.name = name;
  b.parent = parent;
  b.offset = offset;
  b.mass = mass;
  b.com = com;
  b.inertia = inertia;
  return b;
}

inline int add_joint(Model& m, int body, const std::string& name, const Vec3& axis, double lo = -kInf,
                     double hi = kInf, JointKind kind = JointKind::hinge) {
  Joint j;
  j.name = name;
  j.body = body;
  j.kind = kind;
  j.axis = axis.normalized();
  j.lower = lo;
  j.upper = hi;
  j.default_value = std::clamp(0.0, lo, hi);
  const int idx = m.joint_count();
  m.joints.push_back(j);
  m.bodies[body].joints.push_back(idx);
  return idx;
}

inline int add_site(Model& m, int body, const std::string& name, const Vec3& pos,
                    std::vector<std::string> tags = {}) {
  Site s;
  s.name = name;
  s.body = body;
  s.position = pos;
  s.tags = std::move(tags);
  const int idx = static_cast<int>(m.sites.size());
  m.sites.push_back(s);
  m.bodies[body].sites.push_back(idx);
  return idx;
}

inline void add_muscle(Model& m, const std::string& name, std::vector<int> sites, double f0, LengthRange lr,
                       LengthRange r = {0.5, 1.5}) {
  Muscle mu;
  mu.params.name = name;
  mu.params.peak_force = f0;
  mu.params.length_range = lr;
  mu.params.operating_range = r;
  apply_rest_lengths(mu.params);
  mu.path.sites = std::move(sites);
  m.muscles.push_back(mu);
}

// Chain of `links` rods hanging from a fixed base, each link a point mass
// at its tip (com at `len` along local -z), hinged about `axis`.
inline Model make_chain(int links, const Vec3& axis, double len, double mass, double rod_inertia = 0.0) {
  Model m;
  m.bodies.push_back(make_body("base", -1, Vec3(0, 0, 2.0), 1.0, Vec3::Zero(), Mat3::Identity() * 0.01));
  for (int i = 0; i < links; ++i) {
    const Vec3 offset = i == 0 ? Vec3::Zero() : Vec3(0, 0, -len);
    Mat3 inertia = Mat3::Identity() * rod_inertia;
    m.bodies.push_back(make_body("link" + std::to_string(i), i, offset, mass, Vec3(0, 0, -len), inertia));
    add_joint(m, i + 1, "hinge" + std::to_string(i), axis);
  }
  m.finalize();
  return m;
}

// Random tree with 1-3 hinge joints per body and random geometry.
inline Model random_tree(Rng& rng, int bodies) {
  Model m;
  auto rvec = [&](double s) { return Vec3(rng.uniform(-s, s), rng.uniform(-s, s), rng.uniform(-s, s)); };
  auto rspd = [&]() {
    Eigen::Matrix3d a;
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = rng.uniform(-0.3, 0.3);
    return Mat3(a * a.transpose() + 0.01 * Mat3::Identity());
  };
  m.bodies.push_back(make_body("b0", -1, rvec(1.0), rng.uniform(0.5, 2.0), rvec(0.2), rspd()));
  for (int b = 1; b < bodies; ++b) {
    const int parent = static_cast<int>(rng.below(static_cast<std::uint64_t>(b)));
    m.bodies.push_back(make_body("b" + std::to_string(b), parent, rvec(0.6), rng.uniform(0.5, 2.0), rvec(0.2), rspd()));
  }
  for (int b = 0; b < bodies; ++b) {
    const int nj = 1 + static_cast<int>(rng.below(3));
    for (int k = 0; k < nj; ++k) {
      add_joint(m, b, "j" + std::to_string(b) + "_" + std::to_string(k), rvec(1.0).normalized());
    }
  }
  m.finalize();
  return m;
}

// Reference forward kinematics with explicit 4x4 homogeneous transforms and
// the Rodrigues formula; returns body origins.
inline Eigen::Matrix4d rodrigues4(const Vec3& k, double angle) {
  const Mat3 kx = skew(k);
  const Mat3 r = Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() = r;
  return t;
}

inline Eigen::Matrix4d translation4(const Vec3& v) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topRightCorner<3, 1>() = v;
  return t;
}

inline std::vector<Eigen::Matrix4d> reference_body_transforms(const Model& m, const VecX& q) {
  std::vector<Eigen::Matrix4d> out(m.bodies.size());
  for (std::size_t b = 0; b < m.bodies.size(); ++b) {
    Eigen::Matrix4d t = m.bodies[b].parent < 0 ? Eigen::Matrix4d::Identity() : out[m.bodies[b].parent];
    t = t * translation4(m.bodies[b].offset);
    for (int j : m.bodies[b].joints) {
      if (m.joints[j].kind == JointKind::hinge) {
        t = t * rodrigues4(m.joints[j].axis, q[j]);
      } else {
        t = t * translation4(m.joints[j].axis * q[j]);
      }
    }
    out[b] = t;
  }
  return out;
}

// Mass matrix as sum over bodies of J_v' m J_v + J_w' I J_w, with the
// Jacobians obtained by finite differences of the reference kinematics.
inline MatX reference_mass_matrix(const Model& m, const VecX& q) {
  const int n = m.joint_count();
  const double h = 1e-6;
  MatX out = MatX::Zero(n, n);
  const auto base = reference_body_transforms(m, q);
  std::vector<MatX> jv(m.bodies.size(), MatX::Zero(3, n)), jw(m.bodies.size(), MatX::Zero(3, n));
  for (int j = 0; j < n; ++j) {
    VecX qp = q, qm = q;
    qp[j] += h;
    qm[j] -= h;
    const auto tp = reference_body_transforms(m, qp);
    const auto tm = reference_body_transforms(m, qm);
    for (std::size_t b = 0; b < m.bodies.size(); ++b) {
      const Eigen::Vector4d c(m.bodies[b].com.x(), m.bodies[b].com.y(), m.bodies[b].com.z(), 1.0);
      jv[b].col(j) = ((tp[b] * c - tm[b] * c) / (2 * h)).head<3>();
      const Mat3 rdot = (tp[b].topLeftCorner<3, 3>() - tm[b].topLeftCorner<3, 3>()) / (2 * h);
      const Mat3 w = rdot * base[b].topLeftCorner<3, 3>().transpose();
      jw[b].col(j) = Vec3(w(2, 1), w(0, 2), w(1, 0));
    }
  }
  for (std::size_t b = 0; b < m.bodies.size(); ++b) {
    const Mat3 r = base[b].topLeftCorner<3, 3>();
    const Mat3 iw = r * m.bodies[b].inertia * r.transpose();
    out += m.bodies[b].mass * jv[b].transpose() * jv[b] + jw[b].transpose() * iw * jw[b];
  }
  return out;
}

inline TriangleMesh unit_cube() {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5, (i & 4) ? 0.5 : -0.5);
  }
  // Outward-facing, counter-clockwise.
  mesh.triangles = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
                    {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return mesh;
}

inline TriangleMesh icosphere(int subdivisions, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : mesh.vertices) v.normalize();
  mesh.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                    {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                    {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
      const int idx = static_cast<int>(mesh.vertices.size()) - 1;
      mid[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    for (const auto& f : mesh.triangles) {
      const int a = midpoint(f[0], f[1]);
      const int b = midpoint(f[1], f[2]);
      const int c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    mesh.triangles = std::move(next);
  }
  for (auto& v : mesh.vertices) v *= radius;
  return mesh;
}

// Leg with a planar floating root: three markers per body, spread in 3-D.
inline Model marker_leg() {
  Model m;
  m.bodies.push_back(make_body("pelvis", -1, Vec3(0, 0, 1.0), 10.0, Vec3::Zero(), Mat3::Identity() * 0.1));
  add_joint(m, 0, "root_x", Vec3::UnitX(), -kInf, kInf, JointKind::slide);
  add_joint(m, 0, "root_z", Vec3::UnitZ(), -kInf, kInf, JointKind::slide);
  add_joint(m, 0, "root_pitch", Vec3::UnitY(), -1.5, 1.5);
  m.bodies.push_back(make_body("thigh", 0, Vec3(0, 0.1, 0), 5.0, Vec3(0, 0, -0.2), Mat3::Identity() * 0.05));
  add_joint(m, 1, "hip_flex", Vec3::UnitY(), -1.5, 1.5);
  add_joint(m, 1, "hip_add", Vec3::UnitX(), -0.8, 0.8);
  m.bodies.push_back(make_body("shank", 1, Vec3(0, 0, -0.45), 3.0, Vec3(0, 0, -0.2), Mat3::Identity() * 0.03));
  add_joint(m, 2, "knee", Vec3::UnitY(), -2.5, 0.1);
  const std::vector<std::vector<Vec3>> spots = {
      {{0.1, 0.0, 0.05}, {-0.1, 0.08, 0.0}, {0.0, -0.1, 0.1}},
      {{0.06, 0.02, -0.1}, {-0.05, 0.06, -0.25}, {0.02, -0.05, -0.4}},
      {{0.05, 0.03, -0.1}, {-0.04, -0.05, -0.2}, {0.03, 0.04, -0.38}}};
  for (int b = 0; b < 3; ++b) {
    for (int k = 0; k < 3; ++k) {
      MarkerSpec mk;
      mk.name = m.bodies[b].name + "_" + std::to_string(k);
      mk.body = b;
      mk.offset = spots[b][k];
      m.markers.push_back(mk);
    }
  }
  m.finalize();
  return m;
}

// Smooth walking-like joint motion for `marker_leg`.
inline MatX leg_motion(int frames, double rate = 240.0, double phase = 0.0) {
  MatX q(frames, 6);
  for (int f = 0; f < frames; ++f) {
    const double w = 2 * kPi * 1.2 * f / rate + phase;
    q.row(f) << 1.3 * f / rate, 0.02 * std::sin(2 * w), 0.1 * std::sin(w + 0.3), 0.5 * std::sin(w),
        0.1 * std::sin(w + 1.0), -0.6 - 0.5 * std::sin(w + 0.7);
  }
  return q;
}

// Markers seen exactly where the model puts them.
inline Clip synthetic_markers(const Model& m, const MatX& q, double rate = 240.0) {
  std::vector<std::string> names;
  for (const auto& mk : m.markers) names.push_back(mk.name);
  Clip c = Clip::empty(names, static_cast<int>(q.rows()), rate);
  for (int f = 0; f < q.rows(); ++f) {
    const FrameSet fs = forward_kinematics(m, q.row(f).transpose());
    for (std::size_t k = 0; k < m.markers.size(); ++k) {
      const auto& mk = m.markers[k];
      c.set_point(f, static_cast<int>(k), fs.body_position[mk.body] + fs.body_rotation[mk.body] * mk.offset);
      c.mask(f, static_cast<int>(k)) = true;
    }
  }
  return c;
}

}  // namespace musculo::testing
