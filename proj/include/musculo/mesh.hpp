#pragma once

// Mass properties of closed triangle meshes at constant density, by signed
// tetrahedron decomposition against the origin.

#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "musculo/common.hpp"

namespace musculo {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

struct MassProperties {
  double volume = 0.0;
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  // about com
};

// Line-oriented ASCII: "v x y z" and "f i j k" (zero-based). Blank lines and
// lines starting with '#' are skipped.
inline TriangleMesh parse_mesh(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        throw DataError("mesh line " + std::to_string(line_no) + ": expected 'v x y z'");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      if (!(ls >> f[0] >> f[1] >> f[2])) {
        throw DataError("mesh line " + std::to_string(line_no) + ": expected 'f i j k'");
      }
      mesh.triangles.push_back(f);
    } else {
      throw DataError("mesh line " + std::to_string(line_no) + ": unknown record '" + tag + "'");
    }
  }
  return mesh;
}

inline TriangleMesh load_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open mesh file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_mesh(ss.str());
}

namespace detail {

// Every directed edge must be matched by exactly one reverse edge.
inline void check_closed_and_oriented(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  }
  for (const auto& [edge, count] : directed) {
    if (count != 1) throw DataError("mesh is not consistently oriented (edge used twice in one direction)");
    auto rev = directed.find({edge.second, edge.first});
    if (rev == directed.end()) throw DataError("mesh is open (boundary edge)");
  }
}

}  // namespace detail

inline MassProperties mesh_inertia(const std::vector<Vec3>& vertices,
                                   const std::vector<std::array<int, 3>>& triangles,
                                   double density) {
  if (!(density > 0.0)) throw DataError("density must be positive");
  if (triangles.size() < 4) throw DataError("mesh is open (fewer than 4 triangles)");
  const int n = static_cast<int>(vertices.size());
  double scale = 0.0;
  for (const auto& v : vertices) scale = std::max(scale, v.cwiseAbs().maxCoeff());
  scale = std::max(scale, 1e-300);

  for (const auto& t : triangles) {
    for (int idx : t) {
      if (idx < 0 || idx >= n) throw DataError("mesh face index out of range");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw DataError("degenerate triangle (repeated vertex)");
    const Vec3 area2 = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    if (area2.norm() <= 1e-14 * scale * scale) throw DataError("degenerate triangle (zero area)");
  }
  detail::check_closed_and_oriented({vertices, triangles});

  // Per-unit-density volume, first moment and second moment (covariance).
  double volume = 0.0;
  Vec3 first = Vec3::Zero();
  Mat3 second = Mat3::Zero();
  for (const auto& t : triangles) {
    const Vec3& a = vertices[t[0]];
    const Vec3& b = vertices[t[1]];
    const Vec3& c = vertices[t[2]];
    const double v = a.dot(b.cross(c)) / 6.0;
    const Vec3 s = a + b + c;
    volume += v;
    first += v * s / 4.0;
    second += (v / 20.0) * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
  }
  if (volume < 0.0) {  // inside-out: flip orientation
    volume = -volume;
    first = -first;
    second = -second;
  }
  if (!(volume > 0.0)) throw DataError("mesh encloses no volume");

  MassProperties mp;
  mp.volume = volume;
  mp.mass = density * volume;
  mp.com = first / volume;
  const Mat3 central = second - volume * mp.com * mp.com.transpose();
  Mat3 inertia = density * (central.trace() * Mat3::Identity() - central);
  mp.inertia = 0.5 * (inertia + inertia.transpose());
  return mp;
}

inline MassProperties mesh_inertia(const TriangleMesh& mesh, double density) {
  return mesh_inertia(mesh.vertices, mesh.triangles, density);
}

}  // namespace musculo
