// Copyright 2026 The doatrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Coordinate conventions used throughout the library:
//   elevation theta in [0, pi] measured from +z,
//   azimuth phi in [-pi, pi] measured from +x toward +y.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace doatrack {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultSpeedOfSound = 343.0;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3&) const = default;

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  double operator[](std::size_t axis) const {
    return axis == 0 ? x : (axis == 1 ? y : z);
  }
  double& operator[](std::size_t axis) {
    return axis == 0 ? x : (axis == 1 ? y : z);
  }
};

struct Doa {
  double theta = 0.0;  // elevation from +z
  double phi = 0.0;    // azimuth from +x toward +y
};

Vec3 doa_to_unit(const Doa& doa);

/// Throws DegenerateDirection when |v| <= 1e-8. phi = 0 at the poles.
Doa unit_to_doa(const Vec3& v);

/// Great-circle angle between two directions, in radians.
double angular_error(const Vec3& a, const Vec3& b);

class MicArray {
 public:
  MicArray(std::string name, std::vector<Vec3> positions);

  static MicArray from_json(const nlohmann::json& j);
  static MicArray load(const std::string& path);
  nlohmann::json to_json() const;

  const std::string& name() const { return name_; }
  const std::vector<Vec3>& positions() const { return positions_; }
  std::size_t size() const { return positions_.size(); }
  std::size_t num_pairs() const { return size() * (size() - 1) / 2; }

  double max_distance() const;  // aperture
  double min_distance() const;

 private:
  std::string name_;
  std::vector<Vec3> positions_;
};

// Equispaced elevation x azimuth grid. Elevations include both poles,
// azimuths start at -pi and exclude +pi.
class SphericalGrid {
 public:
  SphericalGrid(std::size_t n_theta, std::size_t n_phi);

  std::size_t n_theta() const { return thetas_.size(); }
  std::size_t n_phi() const { return phis_.size(); }
  std::size_t size() const { return n_theta() * n_phi(); }
  const std::vector<double>& thetas() const { return thetas_; }
  const std::vector<double>& phis() const { return phis_; }

  Doa doa(std::size_t i, std::size_t j) const { return {thetas_[i], phis_[j]}; }
  Vec3 unit(std::size_t i, std::size_t j) const { return doa_to_unit(doa(i, j)); }

  /// Number of physically distinct directions once each pole row collapses
  /// to a single point.
  std::size_t distinct_directions() const;

 private:
  std::vector<double> thetas_;
  std::vector<double> phis_;
};

// delta_tau(n, m, g) = tau_n(g) - tau_m(g) under the far-field model
// tau_n = -(r_n . u) / c.
class DelayTable {
 public:
  DelayTable(std::size_t n_mics, std::size_t n_points);

  std::size_t n_mics() const { return n_mics_; }
  std::size_t n_points() const { return n_points_; }
  double operator()(std::size_t n, std::size_t m, std::size_t g) const {
    return data_[(n * n_mics_ + m) * n_points_ + g];
  }
  double& at(std::size_t n, std::size_t m, std::size_t g) {
    return data_[(n * n_mics_ + m) * n_points_ + g];
  }
  double max_abs() const;

 private:
  std::size_t n_mics_;
  std::size_t n_points_;
  std::vector<double> data_;
};

DelayTable delay_table(const MicArray& array, const SphericalGrid& grid,
                       double c = kDefaultSpeedOfSound);

struct GridPeak {
  Doa doa;
  std::size_t i = 0;
  std::size_t j = 0;
};

/// Row-major argmax over an n_theta x n_phi map; ties keep the lowest index.
template <typename T>
GridPeak grid_argmax(std::span<const T> map, const SphericalGrid& grid);

inline double rad2deg(double r) { return r * 180.0 / kPi; }
inline double deg2rad(double d) { return d * kPi / 180.0; }

}  // namespace doatrack
