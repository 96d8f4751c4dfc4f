#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace musculo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline constexpr const char* kVersion = "0.3.0";

// Base of every error the library raises. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent model document. `path` locates the offending
// field, e.g. "bodies[2].mass" or "line 14".
class ModelError : public Error {
 public:
  ModelError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Invalid numeric input or data (bad clip, dimension mismatch, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// The simulation produced a non-finite quantity.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string quantity, const std::string& what)
      : Error(quantity + ": " + what), quantity_(std::move(quantity)) {}
  const std::string& quantity() const noexcept { return quantity_; }

 private:
  std::string quantity_;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

// Rotation by `angle` about unit `axis`.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

inline bool all_finite(const VecX& v) { return v.allFinite(); }

}  // namespace musculo
