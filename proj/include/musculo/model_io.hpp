#pragma once

// Model document reader. The document is JSON with a version tag
// "musculo-model/1" and sections bodies, joints, sites, wrap_geoms,
// muscles and (optionally) markers. Every error names the offending field
// path, e.g. "joints[3].axis".

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "musculo/calibrate.hpp"
#include "musculo/mesh.hpp"
#include "musculo/model.hpp"
#include "musculo/muscle.hpp"

namespace musculo {

inline constexpr const char* kModelVersion = "musculo-model/1";

struct LoadOptions {
  std::filesystem::path base_dir = ".";  // resolves relative mesh paths
  std::function<void(const std::string&)> warn;  // receives non-fatal diagnostics
  long calibration_samples = 10000;  // for length_range "auto"
};

namespace detail {

using nlohmann::json;

class DocReader {
 public:
  explicit DocReader(const LoadOptions& opts) : opts_(opts) {}

  Model read(const json& doc) {
    if (!doc.is_object()) throw ModelError("", "document root must be an object");
    allow(doc, "", {"version", "bodies", "joints", "sites", "wrap_geoms", "muscles", "markers", "name"});
    if (!doc.contains("version") || !doc["version"].is_string() || doc["version"] != kModelVersion) {
      throw ModelError("version", std::string("expected \"") + kModelVersion + "\"");
    }
    read_bodies(section(doc, "bodies", true));
    read_joints(section(doc, "joints", false));
    read_sites(section(doc, "sites", false));
    read_geoms(section(doc, "wrap_geoms", false));
    model_.finalize();
    read_muscles(section(doc, "muscles", false));
    read_markers(section(doc, "markers", false));
    return std::move(model_);
  }

 private:
  static json section(const json& doc, const char* key, bool required) {
    if (!doc.contains(key)) {
      if (required) throw ModelError(key, "missing section");
      return json::array();
    }
    if (!doc[key].is_array()) throw ModelError(key, "must be an array");
    return doc[key];
  }

  static void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ModelError(path, "must be an object");
    for (const auto& [k, v] : obj.items()) {
      bool ok = false;
      for (const char* a : keys) ok = ok || k == a;
      if (!ok) throw ModelError(path.empty() ? k : path + "." + k, "unknown field");
    }
  }

  static std::string at(const std::string& sec, std::size_t i) { return sec + "[" + std::to_string(i) + "]"; }

  static double number(const json& obj, const std::string& path, const char* key, std::optional<double> fallback = {}) {
    if (!obj.contains(key)) {
      if (fallback) return *fallback;
      throw ModelError(path + "." + key, "missing field");
    }
    if (!obj[key].is_number()) throw ModelError(path + "." + key, "must be a number");
    const double v = obj[key].get<double>();
    if (!std::isfinite(v)) throw ModelError(path + "." + key, "must be finite");
    return v;
  }

  static std::string string(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key) || !obj[key].is_string()) throw ModelError(path + "." + key, "missing or not a string");
    return obj[key].get<std::string>();
  }

  static Vec3 vec3(const json& obj, const std::string& path, const char* key, const Vec3& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj[key];
    if (!v.is_array() || v.size() != 3) throw ModelError(path + "." + key, "must be an array of 3 numbers");
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ModelError(path + "." + key, "must be an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
    if (!out.allFinite()) throw ModelError(path + "." + key, "must be finite");
    return out;
  }

  static LengthRange pair(const json& obj, const std::string& path, const char* key) {
    const json& v = obj[key];
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ModelError(path + "." + key, "must be an array [min, max]");
    }
    return {v[0].get<double>(), v[1].get<double>()};
  }

  static std::vector<std::string> tags(const json& obj, const std::string& path) {
    std::vector<std::string> out;
    if (!obj.contains("tags")) return out;
    if (!obj["tags"].is_array()) throw ModelError(path + ".tags", "must be an array of strings");
    for (const auto& t : obj["tags"]) {
      if (!t.is_string()) throw ModelError(path + ".tags", "must be an array of strings");
      out.push_back(t.get<std::string>());
    }
    return out;
  }

  // Axes within 1e-6 of unit norm pass silently, within 1e-2 are normalized
  // with a warning, anything further is an error.
  Vec3 unit_axis(const Vec3& axis, const std::string& path) {
    const double n = axis.norm();
    const double dev = std::abs(n - 1.0);
    if (dev >= 1e-2) {
      throw ModelError(path, "axis norm " + std::to_string(n) + " is not 1 (deviation >= 1e-2)");
    }
    if (dev > 1e-6 && opts_.warn) opts_.warn(path + ": axis norm " + std::to_string(n) + " normalized to 1");
    return axis / n;
  }

  int lookup(const std::unordered_map<std::string, int>& index, const std::string& name, const std::string& path,
             const char* what) {
    auto it = index.find(name);
    if (it == index.end()) throw ModelError(path, std::string("dangling reference to ") + what + " '" + name + "'");
    return it->second;
  }

  void unique(std::unordered_map<std::string, int>& index, const std::string& name, int i, const std::string& path) {
    if (name.empty()) throw ModelError(path + ".name", "must not be empty");
    if (!index.emplace(name, i).second) throw ModelError(path + ".name", "duplicate name '" + name + "'");
  }

  void read_bodies(const json& arr) {
    struct Raw {
      json obj;
      std::string path;
      std::string name;
      std::string parent;  // empty: root
    };
    std::vector<Raw> raw;
    std::unordered_map<std::string, int> doc_index;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = at("bodies", i);
      allow(arr[i], path, {"name", "parent", "offset", "mass", "inertia", "com", "mesh", "density", "tags"});
      Raw r{arr[i], path, string(arr[i], path, "name"), ""};
      if (arr[i].contains("parent") && !arr[i]["parent"].is_null()) {
        if (!arr[i]["parent"].is_string()) throw ModelError(path + ".parent", "must be a body name or null");
        r.parent = arr[i]["parent"].get<std::string>();
      }
      unique(doc_index, r.name, static_cast<int>(i), path);
      raw.push_back(std::move(r));
    }
    int roots = 0;
    for (const auto& r : raw) {
      if (r.parent.empty()) {
        ++roots;
        continue;
      }
      if (r.parent == r.name) throw ModelError(r.path + ".parent", "cycle: body '" + r.name + "' is its own parent");
      lookup(doc_index, r.parent, r.path + ".parent", "body");
    }
    if (roots != 1) throw ModelError("bodies", "expected exactly one root body, found " + std::to_string(roots));
    // Walk up from every body; revisiting a body means a cycle.
    for (const auto& r : raw) {
      std::set<std::string> seen{r.name};
      std::string p = r.parent;
      while (!p.empty()) {
        if (!seen.insert(p).second) throw ModelError(r.path + ".parent", "cycle through body '" + p + "'");
        p = raw[doc_index.at(p)].parent;
      }
    }
    // Topological order, stable with respect to document order.
    std::vector<bool> placed(raw.size(), false);
    while (model_.bodies.size() < raw.size()) {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (placed[i]) continue;
        const Raw& r = raw[i];
        int parent = -1;
        if (!r.parent.empty()) {
          auto it = body_index_.find(r.parent);
          if (it == body_index_.end()) continue;
          parent = it->second;
        }
        placed[i] = true;
        body_index_[r.name] = static_cast<int>(model_.bodies.size());
        model_.bodies.push_back(read_body(r.obj, r.path, r.name, parent));
      }
    }
  }

  Body read_body(const json& obj, const std::string& path, const std::string& name, int parent) {
    Body b;
    b.name = name;
    b.parent = parent;
    b.offset = vec3(obj, path, "offset", Vec3::Zero());
    b.tags = tags(obj, path);
    std::optional<MassProperties> mp;
    if (obj.contains("mesh")) {
      if (!obj["mesh"].is_string()) throw ModelError(path + ".mesh", "must be a file path");
      const double density = number(obj, path, "density");
      try {
        const TriangleMesh mesh = load_mesh((opts_.base_dir / obj["mesh"].get<std::string>()).string());
        mp = mesh_inertia(mesh, density);
      } catch (const DataError& e) {
        throw ModelError(path + ".mesh", e.what());
      }
    }
    // Explicit values win over mesh-derived ones.
    if (obj.contains("mass")) {
      b.mass = number(obj, path, "mass");
    } else if (mp) {
      b.mass = mp->mass;
    } else {
      throw ModelError(path + ".mass", "missing field (give mass or a mesh with density)");
    }
    if (!(b.mass > 0.0)) throw ModelError(path + ".mass", "must be positive");
    b.com = vec3(obj, path, "com", mp ? mp->com : Vec3::Zero());
    if (obj.contains("inertia")) {
      b.inertia = read_inertia(obj["inertia"], path + ".inertia");
    } else {
      b.inertia = mp ? mp->inertia : Mat3::Zero();
    }
    return b;
  }

  static Mat3 read_inertia(const json& v, const std::string& path) {
    std::vector<double> flat;
    auto push = [&](const json& x) {
      if (!x.is_number()) throw ModelError(path, "entries must be numbers");
      flat.push_back(x.get<double>());
    };
    if (!v.is_array()) throw ModelError(path, "must be [ixx,iyy,izz], [ixx,iyy,izz,ixy,ixz,iyz] or a 3x3 array");
    for (const auto& row : v) {
      if (row.is_array()) {
        for (const auto& x : row) push(x);
      } else {
        push(row);
      }
    }
    Mat3 m = Mat3::Zero();
    if (flat.size() == 3) {
      m.diagonal() << flat[0], flat[1], flat[2];
    } else if (flat.size() == 6) {
      m << flat[0], flat[3], flat[4],
           flat[3], flat[1], flat[5],
           flat[4], flat[5], flat[2];
    } else if (flat.size() == 9) {
      m = Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(flat.data());
    } else {
      throw ModelError(path, "must have 3, 6 or 9 entries");
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (!m.allFinite()) throw ModelError(path, "must be finite");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ModelError(path, "must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(m);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale) throw ModelError(path, "must be positive semi-definite");
    return m;
  }

  void read_joints(const json& arr) {
    std::vector<std::vector<Joint>> per_body(model_.bodies.size());
    std::unordered_map<std::string, int> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = at("joints", i);
      const json& o = arr[i];
      allow(o, path, {"name", "body", "type", "axis", "range", "stiffness", "damping", "default", "ik_anchor"});
      Joint j;
      j.name = string(o, path, "name");
      unique(names, j.name, static_cast<int>(i), path);
      j.body = lookup(body_index_, string(o, path, "body"), path + ".body", "body");
      const std::string type = o.contains("type") ? string(o, path, "type") : "hinge";
      if (type == "hinge") {
        j.kind = JointKind::hinge;
      } else if (type == "slide") {
        j.kind = JointKind::slide;
        if (model_.bodies[j.body].parent >= 0) {
          throw ModelError(path + ".type", "slide joints are only allowed on the root body (floating base)");
        }
      } else {
        throw ModelError(path + ".type", "must be \"hinge\" or \"slide\"");
      }
      j.axis = unit_axis(vec3(o, path, "axis", Vec3::UnitZ()), path + ".axis");
      if (o.contains("range")) {
        const LengthRange r = pair(o, path, "range");
        if (!(r.min <= r.max)) throw ModelError(path + ".range", "must satisfy min <= max");
        j.lower = r.min;
        j.upper = r.max;
      }
      j.stiffness = number(o, path, "stiffness", 0.0);
      j.damping = number(o, path, "damping", 0.0);
      if (j.stiffness < 0.0) throw ModelError(path + ".stiffness", "must be >= 0");
      if (j.damping < 0.0) throw ModelError(path + ".damping", "must be >= 0");
      const double fallback = (0.0 >= j.lower && 0.0 <= j.upper) ? 0.0 : 0.5 * (j.lower + j.upper);
      j.default_value = number(o, path, "default", fallback);
      if (j.default_value < j.lower || j.default_value > j.upper) throw ModelError(path + ".default", "outside the joint range");
      if (o.contains("ik_anchor")) j.ik_anchor = number(o, path, "ik_anchor");
      per_body[j.body].push_back(j);
    }
    for (std::size_t b = 0; b < per_body.size(); ++b) {
      for (Joint& j : per_body[b]) {
        const int idx = static_cast<int>(model_.joints.size());
        model_.bodies[b].joints.push_back(idx);
        model_.joints.push_back(std::move(j));
      }
    }
  }

  void read_sites(const json& arr) {
    std::unordered_map<std::string, int> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = at("sites", i);
      allow(arr[i], path, {"name", "body", "pos", "tags"});
      Site s;
      s.name = string(arr[i], path, "name");
      unique(names, s.name, static_cast<int>(i), path);
      s.body = lookup(body_index_, string(arr[i], path, "body"), path + ".body", "body");
      s.position = vec3(arr[i], path, "pos", Vec3::Zero());
      s.tags = tags(arr[i], path);
      model_.bodies[s.body].sites.push_back(static_cast<int>(model_.sites.size()));
      site_index_[s.name] = static_cast<int>(model_.sites.size());
      model_.sites.push_back(std::move(s));
    }
  }

  void read_geoms(const json& arr) {
    std::unordered_map<std::string, int> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = at("wrap_geoms", i);
      const json& o = arr[i];
      allow(o, path, {"name", "body", "kind", "center", "radius", "axis"});
      WrapGeom g;
      g.name = string(o, path, "name");
      unique(names, g.name, static_cast<int>(i), path);
      g.body = lookup(body_index_, string(o, path, "body"), path + ".body", "body");
      const std::string kind = string(o, path, "kind");
      if (kind == "sphere") {
        g.kind = WrapKind::sphere;
      } else if (kind == "cylinder") {
        g.kind = WrapKind::cylinder;
        g.axis = unit_axis(vec3(o, path, "axis", Vec3::UnitZ()), path + ".axis");
      } else {
        throw ModelError(path + ".kind", "must be \"sphere\" or \"cylinder\"");
      }
      g.center = vec3(o, path, "center", Vec3::Zero());
      g.radius = number(o, path, "radius");
      if (!(g.radius > 0.0)) throw ModelError(path + ".radius", "must be positive");
      geom_index_[g.name] = static_cast<int>(model_.wrap_geoms.size());
      model_.wrap_geoms.push_back(std::move(g));
    }
  }

  void read_muscles(const json& arr) {
    std::unordered_map<std::string, int> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = at("muscles", i);
      const json& o = arr[i];
      allow(o, path, {"name", "sites", "wraps", "peak_force", "length_range", "range", "tau_act", "tau_deact",
                      "fv_max", "vmax", "calibration_seed"});
      Muscle m;
      MuscleParams& p = m.params;
      p.name = string(o, path, "name");
      unique(names, p.name, static_cast<int>(i), path);
      if (!o.contains("sites") || !o["sites"].is_array() || o["sites"].size() < 2) {
        throw ModelError(path + ".sites", "must list at least two site names");
      }
      for (std::size_t k = 0; k < o["sites"].size(); ++k) {
        const json& s = o["sites"][k];
        const std::string spath = path + ".sites[" + std::to_string(k) + "]";
        if (!s.is_string()) throw ModelError(spath, "must be a site name");
        m.path.sites.push_back(lookup(site_index_, s.get<std::string>(), spath, "site"));
      }
      if (o.contains("wraps")) {
        if (!o["wraps"].is_array()) throw ModelError(path + ".wraps", "must be an array");
        for (std::size_t k = 0; k < o["wraps"].size(); ++k) {
          const std::string wpath = path + ".wraps[" + std::to_string(k) + "]";
          const json& w = o["wraps"][k];
          allow(w, wpath, {"segment", "geom"});
          WrapAssignment wa;
          const double seg = number(w, wpath, "segment");
          wa.segment = static_cast<int>(seg);
          if (seg != wa.segment || wa.segment < 0 || wa.segment + 1 >= static_cast<int>(m.path.sites.size())) {
            throw ModelError(wpath + ".segment", "must index a segment between consecutive sites");
          }
          if (m.path.wrap_for(wa.segment)) {
            throw ModelError(wpath + ".segment", "segment already has a wrap geometry (add a waypoint instead)");
          }
          wa.geom = lookup(geom_index_, string(w, wpath, "geom"), wpath + ".geom", "wrap geometry");
          m.path.wraps.push_back(wa);
        }
      }
      p.peak_force = number(o, path, "peak_force");
      if (!(p.peak_force > 0.0)) throw ModelError(path + ".peak_force", "must be positive");
      p.tau_act = number(o, path, "tau_act", p.tau_act);
      p.tau_deact = number(o, path, "tau_deact", p.tau_deact);
      if (!(p.tau_act > 0.0)) throw ModelError(path + ".tau_act", "must be positive");
      if (!(p.tau_deact > 0.0)) throw ModelError(path + ".tau_deact", "must be positive");
      p.fv_max = number(o, path, "fv_max", p.fv_max);
      if (!(p.fv_max > 1.0)) throw ModelError(path + ".fv_max", "must exceed 1");
      p.vmax = number(o, path, "vmax", p.vmax);
      if (!(p.vmax > 0.0)) throw ModelError(path + ".vmax", "must be positive");
      if (o.contains("range")) p.operating_range = pair(o, path, "range");
      const LengthRange& r = p.operating_range;
      if (!(r.min > 0.0 && r.min < 1.0 && r.max > 1.0)) throw ModelError(path + ".range", "must satisfy 0 < Rmin < 1 < Rmax");

      if (!o.contains("length_range")) throw ModelError(path + ".length_range", "missing field (give [min, max] or \"auto\")");
      if (o["length_range"].is_string()) {
        if (o["length_range"] != "auto") throw ModelError(path + ".length_range", "must be [min, max] or \"auto\"");
        const auto seed = static_cast<std::uint64_t>(number(o, path, "calibration_seed", 0.0));
        try {
          p.length_range = calibrate_length_range(model_, m.path, opts_.calibration_samples, seed);
        } catch (const DataError& e) {
          throw ModelError(path + ".length_range", e.what());
        }
      } else {
        p.length_range = pair(o, path, "length_range");
      }
      if (!(p.length_range.min > 0.0 && p.length_range.min < p.length_range.max)) {
        throw ModelError(path + ".length_range", "must satisfy 0 < min < max");
      }
      try {
        apply_rest_lengths(p);
      } catch (const DataError& e) {
        throw ModelError(path, e.what());
      }
      model_.muscles.push_back(std::move(m));
    }
  }

  void read_markers(const json& arr) {
    std::unordered_map<std::string, int> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string path = at("markers", i);
      allow(arr[i], path, {"name", "body", "offset"});
      MarkerSpec mk;
      mk.name = string(arr[i], path, "name");
      unique(names, mk.name, static_cast<int>(i), path);
      mk.body = lookup(body_index_, string(arr[i], path, "body"), path + ".body", "body");
      mk.offset = vec3(arr[i], path, "offset", Vec3::Zero());
      model_.markers.push_back(std::move(mk));
    }
  }

  const LoadOptions& opts_;
  Model model_;
  std::unordered_map<std::string, int> body_index_;
  std::unordered_map<std::string, int> site_index_;
  std::unordered_map<std::string, int> geom_index_;
};

}  // namespace detail

inline Model load_model(const std::string& text, const LoadOptions& opts = {}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ModelError("line " + std::to_string(line), std::string("parse error: ") + e.what());
  }
  return detail::DocReader(opts).read(doc);
}

inline Model load_model_file(const std::filesystem::path& file, LoadOptions opts = {}) {
  std::ifstream in(file);
  if (!in) throw ModelError(file.string(), "cannot open model file");
  std::stringstream ss;
  ss << in.rdbuf();
  if (opts.base_dir == ".") opts.base_dir = file.parent_path().empty() ? "." : file.parent_path();
  return load_model(ss.str(), opts);
}

}  // namespace musculo
