#pragma once

// CSV files: marker clips, joint trajectories, simulation dumps and
// reference excitation profiles. Numbers are written with 17 significant
// digits so a value read back is bitwise the value written.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "musculo/dynamics.hpp"
#include "musculo/mocap.hpp"
#include "musculo/trajectory.hpp"

namespace musculo {

struct Table {
  std::vector<std::string> header;
  MatX rows;  // rows x header.size()

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
  int require(const std::string& name, const std::string& where) const {
    const int c = column(name);
    if (c < 0) throw DataError(where + ": missing column '" + name + "'");
    return c;
  }
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& s, const std::string& where) {
  if (s.empty() || s == "NaN" || s == "nan" || s == "NAN") return std::nan("");
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": not a number: '" + s + "'");
  }
}

}  // namespace detail

inline Table parse_table(const std::string& text, const std::string& where = "csv") {
  std::istringstream in(text);
  std::string line;
  Table t;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    t.header = detail::split_csv_line(line);
    break;
  }
  if (t.header.empty()) throw DataError(where + ": no header line");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    const std::string at = where + ":" + std::to_string(line_no);
    if (cells.size() != t.header.size()) {
      throw DataError(at + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(detail::parse_cell(c, at));
    rows.push_back(std::move(r));
  }
  t.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.rows(i, j) = rows[i][j];
  }
  return t;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Table read_table(const std::string& path) { return parse_table(read_text(path), path); }

inline std::string format_table(const Table& t) {
  std::string s;
  for (std::size_t j = 0; j < t.header.size(); ++j) s += (j ? "," : "") + t.header[j];
  s += '\n';
  for (Eigen::Index i = 0; i < t.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.rows.cols(); ++j) {
      if (j) s += ',';
      s += format_number(t.rows(i, j));
    }
    s += '\n';
  }
  return s;
}

// Rate from the time column; rows must be evenly spaced.
inline double table_rate(const Table& t, const std::string& where) {
  const int tc = t.require("time", where);
  if (t.rows.rows() < 2) throw DataError(where + ": need at least two rows to infer the rate");
  const double dt = (t.rows(t.rows.rows() - 1, tc) - t.rows(0, tc)) / static_cast<double>(t.rows.rows() - 1);
  if (!(dt > 0.0)) throw DataError(where + ": time must increase");
  for (Eigen::Index i = 1; i < t.rows.rows(); ++i) {
    if (std::abs(t.rows(i, tc) - t.rows(i - 1, tc) - dt) > 1e-6 * dt + 1e-9) {
      throw DataError(where + ": uneven time step at row " + std::to_string(i + 1));
    }
  }
  const double rate = 1.0 / dt;
  const double rounded = std::round(rate);
  return std::abs(rate - rounded) < 1e-6 * rate ? rounded : rate;
}

// ------------------------------------------------------------ marker clips

inline Clip clip_from_table(const Table& t, const std::string& where = "clip") {
  std::vector<std::string> names;
  for (std::size_t j = 1; j < t.header.size(); j += 3) {
    const std::string& h = t.header[j];
    if (h.size() < 3 || h.substr(h.size() - 2) != "_x") throw DataError(where + ": column '" + h + "' should end in _x");
    const std::string m = h.substr(0, h.size() - 2);
    if (j + 2 >= t.header.size() || t.header[j + 1] != m + "_y" || t.header[j + 2] != m + "_z") {
      throw DataError(where + ": marker '" + m + "' needs _x,_y,_z columns in order");
    }
    names.push_back(m);
  }
  if (t.header.empty() || t.header[0] != "time") throw DataError(where + ": first column must be 'time'");
  Clip c = Clip::empty(names, static_cast<int>(t.rows.rows()), table_rate(t, where));
  c.data = t.rows.rightCols(t.rows.cols() - 1);
  for (int f = 0; f < c.frames(); ++f) {
    for (int m = 0; m < c.marker_count(); ++m) c.mask(f, m) = c.point(f, m).allFinite();
  }
  return c;
}

inline Clip read_clip(const std::string& path) { return clip_from_table(read_table(path), path); }

inline Table clip_table(const Clip& c) {
  Table t;
  t.header.push_back("time");
  for (const auto& m : c.markers) {
    for (const char* ax : {"_x", "_y", "_z"}) t.header.push_back(m + ax);
  }
  t.rows.resize(c.frames(), 1 + 3 * c.marker_count());
  for (int f = 0; f < c.frames(); ++f) {
    t.rows(f, 0) = f / c.rate;
    for (int m = 0; m < c.marker_count(); ++m) {
      const Vec3 p = c.mask(f, m) ? c.point(f, m) : Vec3::Constant(std::nan(""));
      t.rows.block<1, 3>(f, 1 + 3 * m) = p.transpose();
    }
  }
  return t;
}

inline void write_clip(const std::string& path, const Clip& c) { write_text(path, format_table(clip_table(c))); }

// ------------------------------------------------------------ joint trajectories

// Needs q_<joint> for every model joint; qd_<joint> is optional and inferred
// by forward differences when absent. Extra columns are ignored.
inline Trajectory trajectory_from_table(const Table& t, const Model& model, const std::string& where = "trajectory") {
  Trajectory traj = Trajectory::for_model(model, static_cast<int>(t.rows.rows()), table_rate(t, where));
  bool have_qd = true;
  for (int j = 0; j < model.joint_count(); ++j) {
    traj.q.col(j) = t.rows.col(t.require("q_" + model.joints[j].name, where));
    const int c = t.column("qd_" + model.joints[j].name);
    if (c < 0) have_qd = false;
    else traj.qd.col(j) = t.rows.col(c);
  }
  if (!traj.q.allFinite()) throw DataError(where + ": joint positions must be finite");
  return have_qd ? traj : infer_velocities(traj);
}

inline Trajectory read_trajectory(const std::string& path, const Model& model) {
  return trajectory_from_table(read_table(path), model, path);
}

inline Table trajectory_table(const Trajectory& traj) {
  Table t;
  t.header.push_back("time");
  for (const auto& j : traj.joints) t.header.push_back("q_" + j);
  for (const auto& j : traj.joints) t.header.push_back("qd_" + j);
  const int n = static_cast<int>(traj.joints.size());
  t.rows.resize(traj.frames(), 1 + 2 * n);
  for (int f = 0; f < traj.frames(); ++f) t.rows(f, 0) = f / traj.rate;
  t.rows.middleCols(1, n) = traj.q;
  t.rows.middleCols(1 + n, n) = traj.qd;
  return t;
}

inline void write_trajectory(const std::string& path, const Trajectory& traj) {
  write_text(path, format_table(trajectory_table(traj)));
}

// ------------------------------------------------------------ simulation dumps

// One row per recorded state: time, q, qd, per muscle (u, a, l, f), then
// one 0/1 column per contact site.
class StateRecorder {
 public:
  explicit StateRecorder(const Model& model) : model_(&model) {
    header_.push_back("time");
    for (const auto& j : model.joints) header_.push_back("q_" + j.name);
    for (const auto& j : model.joints) header_.push_back("qd_" + j.name);
    for (const auto& m : model.muscles) {
      for (const char* p : {"u_", "a_", "l_", "f_"}) header_.push_back(p + m.params.name);
    }
    for (int s : model.sites_with_tag("contact")) header_.push_back("contact_" + model.sites[s].name);
  }

  void record(const SimState& s) {
    std::vector<double> r;
    r.reserve(header_.size());
    r.push_back(s.time);
    for (Eigen::Index i = 0; i < s.q.size(); ++i) r.push_back(s.q[i]);
    for (Eigen::Index i = 0; i < s.qd.size(); ++i) r.push_back(s.qd[i]);
    for (int m = 0; m < model_->muscle_count(); ++m) {
      r.push_back(s.excitations.size() > m ? s.excitations[m] : 0.0);
      r.push_back(s.muscles[m].activation);
      r.push_back(s.muscles[m].length);
      r.push_back(s.muscle_forces.size() > m ? s.muscle_forces[m] : 0.0);
    }
    for (std::size_t c = 0; c < s.contact.size(); ++c) r.push_back(s.contact[c] ? 1.0 : 0.0);
    r.resize(header_.size(), 0.0);
    rows_.push_back(std::move(r));
  }

  Table table() const {
    Table t;
    t.header = header_;
    t.rows.resize(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(header_.size()));
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      for (std::size_t j = 0; j < header_.size(); ++j) t.rows(i, j) = rows_[i][j];
    }
    return t;
  }
  std::size_t size() const { return rows_.size(); }

 private:
  const Model* model_;
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

// ------------------------------------------------------------ reference profiles

struct ReferenceProfile {
  std::vector<double> phase;  // %
  std::vector<std::string> muscles;
  std::vector<std::vector<double>> values;  // per muscle
};

inline ReferenceProfile reference_from_table(const Table& t, const std::string& where = "reference") {
  const int pc = t.require("phase", where);
  ReferenceProfile r;
  for (Eigen::Index i = 0; i < t.rows.rows(); ++i) r.phase.push_back(t.rows(i, pc));
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (static_cast<int>(j) == pc) continue;
    r.muscles.push_back(t.header[j]);
    std::vector<double> v;
    for (Eigen::Index i = 0; i < t.rows.rows(); ++i) v.push_back(t.rows(i, j));
    for (double x : v) {
      if (!std::isfinite(x)) throw DataError(where + ": non-finite value for '" + t.header[j] + "'");
    }
    r.values.push_back(std::move(v));
  }
  if (r.muscles.empty()) throw DataError(where + ": no muscle columns");
  return r;
}

}  // namespace musculo
