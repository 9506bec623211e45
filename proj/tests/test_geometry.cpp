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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "doatrack/error.hpp"
#include "doatrack/geometry.hpp"

using namespace doatrack;

namespace {

void check_vec(const Vec3& a, const Vec3& b, double tol = 1e-12) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
  CHECK(std::abs(a.z - b.z) <= tol);
}

MicArray nao() { return MicArray::load(std::string(DOATRACK_DATA_DIR) + "/arrays/nao_head.json"); }

}  // namespace

TEST_CASE("doa_to_unit on the axes") {
  check_vec(doa_to_unit({0.0, 1.234}), {0, 0, 1});
  check_vec(doa_to_unit({kPi / 2, 0.0}), {1, 0, 0});
  check_vec(doa_to_unit({kPi / 2, kPi / 2}), {0, 1, 0});
}

TEST_CASE("unit_to_doa conventions") {
  auto d = unit_to_doa({0, 0, 2});
  CHECK(d.theta == 0.0);
  CHECK(d.phi == 0.0);
  d = unit_to_doa({1, 0, 0});
  CHECK(d.theta == doctest::Approx(kPi / 2));
  CHECK(d.phi == 0.0);
  d = unit_to_doa({0, -1, 0});
  CHECK(d.theta == doctest::Approx(kPi / 2));
  CHECK(d.phi == doctest::Approx(-kPi / 2));
  CHECK_THROWS_AS(unit_to_doa({1e-9, 0, 0}), Error);
  try {
    unit_to_doa({0, 0, 0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateDirection);
  }
}

TEST_CASE("doa round trip and unit norm, randomized") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> th(1e-6, kPi - 1e-6), ph(-kPi, kPi);
  for (int k = 0; k < 10000; ++k) {
    Doa d{th(rng), ph(rng)};
    const Vec3 u = doa_to_unit(d);
    CHECK(std::abs(u.norm() - 1.0) <= 1e-12);
    const Vec3 back = doa_to_unit(unit_to_doa(u * 3.7));
    check_vec(back, u, 1e-9);
  }
}

TEST_CASE("angular_error properties") {
  CHECK(angular_error({1, 0, 0}, {1, 0, 0}) == 0.0);
  CHECK(angular_error({1, 0, 0}, {0, 1, 0}) == doctest::Approx(kPi / 2));
  CHECK(angular_error({1, 0, 0}, {-1, 0, 0}) == doctest::Approx(kPi));
  CHECK_THROWS_AS(angular_error({0, 0, 0}, {1, 0, 0}), Error);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> s(0.1, 10.0);
  for (int k = 0; k < 2000; ++k) {
    Vec3 a{n(rng), n(rng), n(rng)}, b{n(rng), n(rng), n(rng)};
    const double e = angular_error(a, b);
    CHECK(e >= 0.0);
    CHECK(e <= kPi);
    CHECK(e == angular_error(b, a));
    CHECK(std::abs(angular_error(a * s(rng), b * s(rng)) - e) < 1e-7);
    CHECK(angular_error(a, a * s(rng)) < 1e-7);
  }
}

TEST_CASE("spherical grid sampling") {
  SphericalGrid g(4, 8);
  CHECK(g.thetas().front() == 0.0);
  CHECK(g.thetas().back() == kPi);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(rad2deg(g.thetas()[i] - g.thetas()[i - 1]) == doctest::Approx(60.0));
  }
  CHECK(g.phis().front() == -kPi);
  for (std::size_t j = 1; j < 8; ++j) {
    CHECK(rad2deg(g.phis()[j] - g.phis()[j - 1]) == doctest::Approx(45.0));
  }
  CHECK(g.phis().back() < kPi);
  CHECK(g.distinct_directions() == 18);

  // Count distinct unit vectors directly.
  std::set<std::tuple<long, long, long>> dirs;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const Vec3 u = g.unit(i, j);
      dirs.insert({std::lround(u.x * 1e6), std::lround(u.y * 1e6), std::lround(u.z * 1e6)});
    }
  CHECK(dirs.size() == 18);
}

TEST_CASE("array file and NAO geometry distances") {
  const MicArray a = nao();
  CHECK(a.size() == 12);
  CHECK(a.num_pairs() == 66);
  CHECK(std::round(a.min_distance() * 1000.0) / 10.0 == doctest::Approx(1.3));
  CHECK(std::round(a.max_distance() * 1000.0) / 10.0 == doctest::Approx(12.1));

  CHECK_THROWS_AS(MicArray("one", {{0, 0, 0}}), Error);
  CHECK_THROWS_AS(MicArray("dup", {{0, 0, 0}, {0, 0, 0}}), Error);
  const auto j = nlohmann::json::parse(R"({"name":"x","positions_m":[[0,0],[1,0,0]]})");
  CHECK_THROWS_AS(MicArray::from_json(j), Error);
  const MicArray again = MicArray::from_json(a.to_json());
  CHECK(again.positions() == a.positions());
}

TEST_CASE("delay table") {
  const double d = 0.2, c = 343.0;
  MicArray pair("pair", {{d / 2, 0, 0}, {-d / 2, 0, 0}});
  SphericalGrid g(5, 8);  // theta 90 deg at i = 2, phi 0 at j = 4
  const DelayTable t = delay_table(pair, g, c);
  const std::size_t g_x = 2 * 8 + 4;
  CHECK(t(0, 1, g_x) == doctest::Approx(-d / c));
  const std::size_t g_y = 2 * 8 + 6;  // phi = +90 deg, broadside
  CHECK(std::abs(t(0, 1, g_y)) < 1e-15);
  CHECK(std::abs(t(0, 1, 0)) < 1e-15);  // pole, broadside

  const MicArray a = nao();
  SphericalGrid g2(8, 16);
  const DelayTable t2 = delay_table(a, g2, c);
  for (std::size_t n = 0; n < a.size(); ++n) {
    for (std::size_t m = 0; m < a.size(); ++m) {
      for (std::size_t p = 0; p < g2.size(); ++p) {
        CHECK(t2(n, m, p) == -t2(m, n, p));
        if (n == m) CHECK(t2(n, m, p) == 0.0);
      }
    }
  }
  CHECK(t2.max_abs() <= a.max_distance() / c + 1e-15);
}

TEST_CASE("grid_argmax tie-break and single peak") {
  SphericalGrid g(4, 8);
  std::vector<float> map(32, 0.0f);
  auto p = grid_argmax<float>(map, g);
  CHECK(p.i == 0);
  CHECK(p.j == 0);
  CHECK(p.doa.theta == 0.0);
  CHECK(p.doa.phi == -kPi);
  map[2 * 8 + 5] = 0.5f;
  p = grid_argmax<float>(map, g);
  CHECK(p.i == 2);
  CHECK(p.j == 5);
  map[3 * 8 + 1] = 0.5f;  // equal value later in row-major order
  p = grid_argmax<float>(map, g);
  CHECK(p.i == 2);
  std::vector<float> wrong(31);
  CHECK_THROWS_AS(grid_argmax<float>(wrong, g), Error);
}
