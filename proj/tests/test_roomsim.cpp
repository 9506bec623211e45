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

#include <cmath>
#include <numeric>
#include <random>

#include "doatrack/error.hpp"
#include "doatrack/roomsim.hpp"

using namespace doatrack;

namespace {

// Independent of the library's decay fit: fits the Schroeder curve with a
// two-point slope between the -5 dB and -25 dB crossings.
double schroeder_fit(const std::vector<double>& energy, double dt) {
  std::vector<double> edc(energy.size());
  double acc = 0.0;
  for (std::size_t n = energy.size(); n-- > 0;) edc[n] = (acc += energy[n]);
  double t5 = -1, t25 = -1;
  for (std::size_t n = 0; n < edc.size(); ++n) {
    const double db = 10 * std::log10(edc[n] / acc);
    if (t5 < 0 && db <= -5) t5 = n * dt;
    if (t25 < 0 && db <= -25) t25 = n * dt;
  }
  return 60.0 * (t25 - t5) / 20.0;
}

std::vector<double> direct_convolve(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (x[n] == 0.0) continue;
    for (std::size_t k = 0; k < h.size() && n + k < y.size(); ++k) y[n + k] += x[n] * h[k];
  }
  return y;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

std::vector<double> white(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST_CASE("beta_from_t60 Sabine inversion") {
  const auto r = beta_from_t60({6, 5, 3}, 0.5);
  CHECK(r.alpha == doctest::Approx(0.161 * 90.0 / (126.0 * 0.5)));
  CHECK(r.alpha == doctest::Approx(0.2300).epsilon(1e-4));
  CHECK(r.beta == doctest::Approx(0.8775).epsilon(1e-4));
  CHECK_FALSE(r.non_physical_t60);

  const auto r2 = beta_from_t60({6, 5, 3}, 1.0);
  CHECK(r2.alpha == doctest::Approx(r.alpha / 2));

  const auto slow = beta_from_t60({6, 5, 3}, 1e9);
  CHECK(slow.beta < 1.0);
  CHECK(slow.beta > 0.9999);

  const auto fast = beta_from_t60({6, 5, 3}, 0.01);
  CHECK(fast.non_physical_t60);
  CHECK(fast.alpha == kMaxAlpha);
  CHECK_THROWS_AS(beta_from_t60({6, 5, 3}, 0.0), Error);
}

TEST_CASE("anechoic RIR at 1 m") {
  Room room = make_room({6, 5, 3}, 0.0);
  CHECK(room.beta == 0.0);
  RirOptions opt;
  opt.t_max = 0.02;
  const Rir rir = simulate_rir(room, {2, 2, 1.5}, {3, 2, 1.5}, opt);
  const double sum = std::accumulate(rir.taps.begin(), rir.taps.end(), 0.0);
  CHECK(sum == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-3));
  double moment = 0.0;
  for (std::size_t n = 0; n < rir.taps.size(); ++n) moment += n * rir.taps[n];
  CHECK(moment / sum == doctest::Approx(16000.0 / 343.0).epsilon(1e-3));
  const auto peak = std::max_element(rir.taps.begin(), rir.taps.end()) - rir.taps.begin();
  CHECK(peak == 47);
  CHECK(image_source_count(images_per_axis(room, 0.02, 343.0)) == 1);
}

TEST_CASE("image lattice size") {
  CHECK(image_source_count({0, 0, 0}) == 1);
  CHECK(image_source_count({1, 2, 3}) == 3 * 5 * 7);
  Room room = make_room({4, 5, 3}, 0.4);
  const auto n = images_per_axis(room, 0.1, 343.0);
  CHECK(n[0] == static_cast<int>(std::floor(34.3 / 4)) + 1);
  CHECK(n[2] == static_cast<int>(std::floor(34.3 / 3)) + 1);
}

TEST_CASE("direct path is the earliest energy") {
  Room room = make_room({5, 4, 3}, 0.4);
  RirOptions opt;
  opt.t_max = 0.2;
  const Vec3 src{1, 1, 1}, mic{3.5, 2.5, 1.7};
  const Rir rir = simulate_rir(room, src, mic, opt);
  const double delay = (src - mic).norm() / 343.0 * 16000.0;
  const auto first = std::find_if(rir.taps.begin(), rir.taps.end(),
                                  [](double v) { return v != 0.0; }) - rir.taps.begin();
  CHECK(first >= static_cast<long>(std::lround(delay)) - kFracDelayTaps / 2);
  for (double v : rir.taps) CHECK(std::isfinite(v));
}

TEST_CASE("out of room") {
  Room room = make_room({5, 4, 3}, 0.4);
  RirOptions opt;
  CHECK_THROWS_AS(simulate_rir(room, {6, 1, 1}, {1, 1, 1}, opt), Error);
  try {
    simulate_rir(room, {1, 1, 1}, {1, 1, 0}, opt);
    FAIL("expected OutOfRoom");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kOutOfRoom);
  }
}

TEST_CASE("Schroeder decay matches requested T60 within 25%") {
  for (const Vec3 dims : {Vec3{6, 5, 3}, Vec3{4, 3.5, 2.7}, Vec3{8, 6, 3.5}})
  for (double t60 : {0.3, 0.5, 0.7, 1.0}) {
    Room room = make_room(dims, t60);
    RirOptions opt;
    opt.t_max = t60;
    const Rir rir = simulate_rir(room, dims * 0.3 + Vec3{0.2, 0.9, 0.1},
                                 dims * 0.7 - Vec3{0.1, 0.5, 0.4}, opt);
    std::vector<double> energy(rir.taps.size());
    for (std::size_t n = 0; n < energy.size(); ++n) energy[n] = rir.taps[n] * rir.taps[n];
    const double measured = schroeder_fit(energy, 1.0 / opt.fs);
    INFO("room " << dims.x << "x" << dims.y << "x" << dims.z << " t60 " << t60
                 << " measured " << measured);
    CHECK(std::abs(measured - t60) <= 0.25 * t60);
  }
}

TEST_CASE("static trajectory equals single-RIR convolution") {
  Room room = make_room({5, 4, 3}, 0.3);
  RirOptions opt;
  opt.t_max = 0.15;
  const std::size_t seg = 1000;
  const auto dry = white(8 * seg + 377, 3);
  std::vector<Vec3> pts(9, Vec3{1.2, 2.5, 1.3});
  std::vector<Vec3> mics = {{3, 2, 1}, {3.05, 2, 1}};
  const MicSignals out = render_moving_source(dry, pts, seg, mics, room, opt);
  REQUIRE(out.num_channels() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto h = simulate_rir(room, pts[0], mics[k], opt).taps;
    const auto ref = direct_convolve(dry, h);
    CHECK(rel_l2(out.channels[k], ref) < 1e-6);
  }
}

TEST_CASE("impulse at a segment start yields that point's RIR") {
  Room room = make_room({5, 4, 3}, 0.3);
  RirOptions opt;
  opt.t_max = 0.1;
  const std::size_t seg = 500;
  std::vector<Vec3> pts = {{1, 1, 1}, {1.5, 1.2, 1.1}, {2, 1.4, 1.2}, {2.5, 1.6, 1.3}};
  std::vector<Vec3> mics = {{3, 2, 1}};
  std::vector<double> dry(4 * seg + 2000, 0.0);
  dry[2 * seg] = 1.0;
  const MicSignals out = render_moving_source(dry, pts, seg, mics, room, opt);
  const auto h = simulate_rir(room, pts[2], mics[0], opt).taps;
  for (std::size_t t = 0; t < dry.size(); ++t) {
    const double expect = (t >= 2 * seg && t - 2 * seg < h.size()) ? h[t - 2 * seg] : 0.0;
    CHECK(std::abs(out.channels[0][t] - expect) < 1e-12);
  }
}

TEST_CASE("rendering is linear in the dry signal") {
  Room room = make_room({5, 4, 3}, 0.3);
  RirOptions opt;
  opt.t_max = 0.1;
  const std::size_t seg = 700;
  std::vector<Vec3> pts = {{1, 1, 1}, {1.3, 1.2, 1.1}, {1.6, 1.4, 1.2}};
  std::vector<Vec3> mics = {{3, 2, 1}, {3, 2.1, 1}};
  const auto x = white(3 * seg + 100, 5), y = white(3 * seg + 100, 6);
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.7 * x[i] - 1.9 * y[i];
  const auto rx = render_moving_source(x, pts, seg, mics, room, opt);
  const auto ry = render_moving_source(y, pts, seg, mics, room, opt);
  const auto rz = render_moving_source(z, pts, seg, mics, room, opt);
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> comb(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      comb[i] = 0.7 * rx.channels[k][i] - 1.9 * ry.channels[k][i];
    CHECK(rel_l2(rz.channels[k], comb) < 1e-9);
  }
}

TEST_CASE("noise at requested SNR") {
  MicSignals sig;
  sig.fs = 16000;
  const std::size_t n = 320000, K = 4096, hop = 3072;
  sig.channels = {white(n, 1), white(n, 2)};
  for (std::size_t t = 0; t < n; ++t) {
    const double env = (t / 16000) % 2 == 0 ? 1.0 : 0.0;
    sig.channels[0][t] *= env;
    sig.channels[1][t] *= 0.5 * env;
  }
  const std::size_t n_frames = (n - K) / hop + 1;
  std::vector<bool> active(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    double e = 0;
    for (std::size_t t = f * hop; t < f * hop + K; ++t) e += sig.channels[0][t] * sig.channels[0][t];
    active[f] = e > 0;
  }

  std::mt19937_64 rng(42);
  const auto noise = make_noise(sig, 12.0, active, K, hop, rng);
  const double ps = active_frame_power(sig, active, K, hop);
  const double pn = active_frame_power(noise, active, K, hop);
  CHECK(std::abs(10 * std::log10(ps / pn) - 12.0) < 0.3);

  std::mt19937_64 a(9), b(9);
  const auto out1 = add_noise(sig, 5.0, active, K, hop, a);
  const auto out2 = add_noise(sig, 5.0, active, K, hop, b);
  CHECK(out1.channels == out2.channels);

  // Signal and noise components reconstruct the noisy output.
  std::mt19937_64 c(9);
  const auto parts = make_noise(sig, 5.0, active, K, hop, c);
  for (std::size_t t = 0; t < n; t += 997)
    CHECK(out1.channels[1][t] == sig.channels[1][t] + parts.channels[1][t]);

  std::mt19937_64 d(1);
  const auto clean = add_noise(sig, std::numeric_limits<double>::infinity(), active, K, hop, d);
  CHECK(clean.channels == sig.channels);

  std::vector<bool> silent(n_frames, false);
  CHECK_THROWS_AS(make_noise(sig, 10.0, silent, K, hop, d), Error);
}
