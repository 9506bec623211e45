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

#include "doatrack/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "doatrack/error.hpp"

namespace doatrack {

Vec3 doa_to_unit(const Doa& doa) {
  const double st = std::sin(doa.theta);
  return {st * std::cos(doa.phi), st * std::sin(doa.phi), std::cos(doa.theta)};
}

Doa unit_to_doa(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 1e-8)) {
    throw Error(ErrorCode::kDegenerateDirection, "direction vector norm <= 1e-8");
  }
  const double z = std::clamp(v.z / n, -1.0, 1.0);
  Doa d;
  d.theta = std::acos(z);
  d.phi = (v.x == 0.0 && v.y == 0.0) ? 0.0 : std::atan2(v.y, v.x);
  return d;
}

double angular_error(const Vec3& a, const Vec3& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw Error(ErrorCode::kDegenerateDirection, "zero vector in angular_error");
  }
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c);
}

MicArray::MicArray(std::string name, std::vector<Vec3> positions)
    : name_(std::move(name)), positions_(std::move(positions)) {
  if (positions_.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "array needs at least 2 sensors");
  }
  for (const auto& p : positions_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite sensor position");
    }
  }
  if (!(min_distance() > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "coincident sensors in array");
  }
}

MicArray MicArray::from_json(const nlohmann::json& j) {
  try {
    std::vector<Vec3> pos;
    for (const auto& p : j.at("positions_m")) {
      if (p.size() != 3) {
        throw Error(ErrorCode::kFormatError, "position must have 3 coordinates");
      }
      pos.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    return MicArray(j.value("name", std::string("unnamed")), std::move(pos));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("array file: ") + e.what());
  }
}

MicArray MicArray::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open array file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, "array file " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json MicArray::to_json() const {
  nlohmann::json pos = nlohmann::json::array();
  for (const auto& p : positions_) pos.push_back({p.x, p.y, p.z});
  return {{"name", name_}, {"positions_m", pos}};
}

double MicArray::max_distance() const {
  double best = 0.0;
  for (std::size_t a = 0; a < size(); ++a)
    for (std::size_t b = a + 1; b < size(); ++b)
      best = std::max(best, (positions_[a] - positions_[b]).norm());
  return best;
}

double MicArray::min_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < size(); ++a)
    for (std::size_t b = a + 1; b < size(); ++b)
      best = std::min(best, (positions_[a] - positions_[b]).norm());
  return best;
}

SphericalGrid::SphericalGrid(std::size_t n_theta, std::size_t n_phi) {
  if (n_theta < 2 || n_phi < 1) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs n_theta >= 2, n_phi >= 1");
  }
  thetas_.resize(n_theta);
  for (std::size_t i = 0; i < n_theta; ++i) {
    thetas_[i] = kPi * static_cast<double>(i) / static_cast<double>(n_theta - 1);
  }
  thetas_.back() = kPi;
  phis_.resize(n_phi);
  for (std::size_t j = 0; j < n_phi; ++j) {
    phis_[j] = -kPi + 2.0 * kPi * static_cast<double>(j) / static_cast<double>(n_phi);
  }
}

std::size_t SphericalGrid::distinct_directions() const {
  return 2 + (n_theta() - 2) * n_phi();
}

DelayTable::DelayTable(std::size_t n_mics, std::size_t n_points)
    : n_mics_(n_mics), n_points_(n_points), data_(n_mics * n_mics * n_points, 0.0) {}

double DelayTable::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

DelayTable delay_table(const MicArray& array, const SphericalGrid& grid, double c) {
  const std::size_t n_mics = array.size();
  DelayTable table(n_mics, grid.size());
  std::vector<double> tau(n_mics);
  for (std::size_t i = 0; i < grid.n_theta(); ++i) {
    for (std::size_t j = 0; j < grid.n_phi(); ++j) {
      const std::size_t g = i * grid.n_phi() + j;
      const Vec3 u = grid.unit(i, j);
      for (std::size_t n = 0; n < n_mics; ++n) {
        tau[n] = -array.positions()[n].dot(u) / c;
      }
      for (std::size_t n = 0; n < n_mics; ++n) {
        for (std::size_t m = n + 1; m < n_mics; ++m) {
          const double d = tau[n] - tau[m];
          table.at(n, m, g) = d;
          table.at(m, n, g) = -d;
        }
      }
    }
  }
  return table;
}

template <typename T>
GridPeak grid_argmax(std::span<const T> map, const SphericalGrid& grid) {
  if (map.size() != grid.size()) {
    throw Error(ErrorCode::kShapeError, "map size does not match grid");
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < map.size(); ++k) {
    if (map[k] > map[best]) best = k;
  }
  GridPeak peak;
  peak.i = best / grid.n_phi();
  peak.j = best % grid.n_phi();
  peak.doa = grid.doa(peak.i, peak.j);
  return peak;
}

template GridPeak grid_argmax<float>(std::span<const float>, const SphericalGrid&);
template GridPeak grid_argmax<double>(std::span<const double>, const SphericalGrid&);

}  // namespace doatrack
