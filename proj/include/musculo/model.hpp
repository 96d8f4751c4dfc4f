#pragma once

// Articulated model: a tree of bodies connected by single-DOF joints, with
// sites, wrap geometries, muscles and mocap marker attachments.

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "musculo/common.hpp"
#include "musculo/muscle.hpp"

namespace musculo {

// Hinge joints are the articulation primitive. Slide joints exist only to
// express the floating base as internal coordinates on the root body.
enum class JointKind { hinge, slide };

struct Joint {
  std::string name;
  int body = -1;
  JointKind kind = JointKind::hinge;
  Vec3 axis = Vec3::UnitZ();  // unit, in the frame preceding this joint
  double lower = -kInf;
  double upper = kInf;
  double stiffness = 0.0;  // N m / rad (N / m for slides)
  double damping = 0.0;
  double default_value = 0.0;
  // Anchor angle of the pose-shape regularizer used by marker IK.
  std::optional<double> ik_anchor;

  bool limited() const { return std::isfinite(lower) && std::isfinite(upper); }
  double clamp(double q) const { return std::clamp(q, lower, upper); }
};

struct Site {
  std::string name;
  int body = -1;
  Vec3 position = Vec3::Zero();  // body frame
  std::vector<std::string> tags;

  bool has_tag(const std::string& t) const {
    return std::find(tags.begin(), tags.end(), t) != tags.end();
  }
};

enum class WrapKind { sphere, cylinder };

struct WrapGeom {
  std::string name;
  int body = -1;
  WrapKind kind = WrapKind::sphere;
  Vec3 center = Vec3::Zero();  // body frame
  double radius = 0.0;
  Vec3 axis = Vec3::UnitZ();  // cylinder only, body frame
};

struct Body {
  std::string name;
  int parent = -1;
  Vec3 offset = Vec3::Zero();  // joint anchor in the parent frame
  std::vector<int> joints;     // applied in order after the offset
  double mass = 1.0;
  Mat3 inertia = Mat3::Identity();  // about the center of mass, body frame
  Vec3 com = Vec3::Zero();
  std::vector<int> sites;
  std::vector<std::string> tags;

  bool has_tag(const std::string& t) const {
    return std::find(tags.begin(), tags.end(), t) != tags.end();
  }
};

// A wrap geometry bound to the segment between sites[segment] and
// sites[segment + 1].
struct WrapAssignment {
  int segment = 0;
  int geom = -1;
};

struct MusclePath {
  std::vector<int> sites;  // origin, waypoints..., insertion
  std::vector<WrapAssignment> wraps;

  const WrapAssignment* wrap_for(int segment) const {
    for (const auto& w : wraps) {
      if (w.segment == segment) return &w;
    }
    return nullptr;
  }
};

struct Muscle {
  MuscleParams params;
  MusclePath path;
};

struct MarkerSpec {
  std::string name;
  int body = -1;
  Vec3 offset = Vec3::Zero();
};

struct Model {
  std::vector<Body> bodies;  // topological order, root first
  std::vector<Joint> joints;  // body order, then listed order within a body
  std::vector<Site> sites;
  std::vector<WrapGeom> wrap_geoms;
  std::vector<Muscle> muscles;
  std::vector<MarkerSpec> markers;

  // Derived: joints on the path root -> body, in application order.
  std::vector<std::vector<int>> chain;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int muscle_count() const { return static_cast<int>(muscles.size()); }

  double total_mass() const {
    double m = 0.0;
    for (const auto& b : bodies) m += b.mass;
    return m;
  }

  // True when joint j moves body b.
  bool moves(int j, int b) const {
    const auto& c = chain[b];
    return std::find(c.begin(), c.end(), j) != c.end();
  }

  VecX default_positions() const {
    VecX q(joint_count());
    for (int j = 0; j < joint_count(); ++j) q[j] = joints[j].default_value;
    return q;
  }

  // Rebuilds `chain`. Call after editing the tree.
  void finalize() {
    chain.assign(bodies.size(), {});
    for (std::size_t b = 0; b < bodies.size(); ++b) {
      if (bodies[b].parent >= 0) chain[b] = chain[bodies[b].parent];
      for (int j : bodies[b].joints) chain[b].push_back(j);
    }
  }

  int body_index(const std::string& n) const { return find(bodies, n, "body"); }
  int joint_index(const std::string& n) const { return find(joints, n, "joint"); }
  int site_index(const std::string& n) const { return find(sites, n, "site"); }
  int geom_index(const std::string& n) const { return find(wrap_geoms, n, "wrap geometry"); }
  int marker_index(const std::string& n) const { return find(markers, n, "marker"); }
  int muscle_index(const std::string& n) const {
    for (std::size_t i = 0; i < muscles.size(); ++i) {
      if (muscles[i].params.name == n) return static_cast<int>(i);
    }
    throw DataError("unknown muscle '" + n + "'");
  }

  std::optional<int> find_body_by_tag(const std::string& tag) const {
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      if (bodies[i].has_tag(tag)) return static_cast<int>(i);
    }
    return std::nullopt;
  }
  std::vector<int> bodies_with_tag(const std::string& tag) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      if (bodies[i].has_tag(tag)) out.push_back(static_cast<int>(i));
    }
    return out;
  }
  std::vector<int> sites_with_tag(const std::string& tag) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (sites[i].has_tag(tag)) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  // Bodies whose frames a muscle path depends on.
  std::vector<int> path_bodies(const MusclePath& path) const {
    std::vector<int> out;
    for (int s : path.sites) out.push_back(sites[s].body);
    for (const auto& w : path.wraps) out.push_back(wrap_geoms[w.geom].body);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // Joints that change a path's length: those moving some, but not all, of
  // the bodies the path touches. Everything else moves the path rigidly.
  std::vector<bool> path_span(const MusclePath& path) const {
    const auto bs = path_bodies(path);
    std::vector<bool> span(joints.size(), false);
    for (int j = 0; j < joint_count(); ++j) {
      int n = 0;
      for (int b : bs) n += moves(j, b) ? 1 : 0;
      span[j] = n > 0 && n < static_cast<int>(bs.size());
    }
    return span;
  }

 private:
  template <class T>
  static int find(const std::vector<T>& v, const std::string& n, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].name == n) return static_cast<int>(i);
    }
    throw DataError(std::string("unknown ") + what + " '" + n + "'");
  }
};

}  // namespace musculo
