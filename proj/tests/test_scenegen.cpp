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

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <limits>

#include "doatrack/error.hpp"
#include "doatrack/fft.hpp"
#include "doatrack/scenegen.hpp"
#include "doatrack/srpfeat.hpp"
#include "doatrack/wav.hpp"

using namespace doatrack;

namespace {

MicArray nao() { return MicArray::load(std::string(DOATRACK_DATA_DIR) + "/arrays/nao_head.json"); }

bool feasible(double p0, double pL, double A, double omega, double length, std::size_t L) {
  for (const auto& p : trajectory_points({p0, 1, 1}, {pL, 1, 1}, {A, 0, 0}, {omega, 0, 0}, L)) {
    if (!(p.x > 0.0 && p.x < length)) return false;
  }
  return true;
}

SceneConfig small_config() {
  SceneConfig c;
  c.room_min = {4, 4, 2.5};
  c.room_max = {6, 5, 3};
  c.t60_range = {0.2, 0.4};
  c.rir_max_seconds = 0.1;
  c.duration = 3.0;
  return c;
}

}  // namespace

TEST_CASE("degenerate ranges give a deterministic scene") {
  SceneConfig c;
  c.room_min = c.room_max = {5, 4, 3};
  c.snr_range = {20, 20};
  c.t60_range = {0.5, 0.5};
  c.wall_margin_fraction = 0.1;
  std::mt19937_64 rng(1);
  const auto d = sample_scene(c, rng);
  CHECK(d.room.dims == Vec3{5, 4, 3});
  CHECK(d.snr_db == 20);
  CHECK(d.t60 == 0.5);
  CHECK(d.room.beta == doctest::Approx(beta_from_t60({5, 4, 3}, 0.5).beta));
}

TEST_CASE("scene sampling stays inside the configured ranges") {
  const SceneConfig c;
  std::mt19937_64 rng(2);
  Vec3 lo{1e9, 1e9, 1e9}, hi{0, 0, 0};
  double t60_lo = 1e9, t60_hi = 0, snr_lo = 1e9, snr_hi = -1e9;
  for (int k = 0; k < 10000; ++k) {
    const auto d = sample_scene(c, rng);
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], d.room.dims[a]);
      hi[a] = std::max(hi[a], d.room.dims[a]);
      REQUIRE(d.array_origin[a] >= 0.1 * d.room.dims[a]);
      REQUIRE(d.room.dims[a] - d.array_origin[a] >= 0.1 * d.room.dims[a]);
    }
    REQUIRE(d.array_origin.z <= 0.5 * d.room.dims.z);
    t60_lo = std::min(t60_lo, d.t60);
    t60_hi = std::max(t60_hi, d.t60);
    snr_lo = std::min(snr_lo, d.snr_db);
    snr_hi = std::max(snr_hi, d.snr_db);
  }
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(lo[a] >= c.room_min[a]);
    CHECK(hi[a] <= c.room_max[a]);
    CHECK(hi[a] - lo[a] > 0.95 * (c.room_max[a] - c.room_min[a]));
  }
  CHECK(t60_lo >= 0.2);
  CHECK(t60_hi <= 1.3);
  CHECK(snr_lo >= 5);
  CHECK(snr_hi <= 30);
}

TEST_CASE("trajectory formula") {
  const auto pts = trajectory_points({1, 1, 1}, {3, 1, 1}, {0, 0, 0}, {0.3, 0.2, 0.1}, 3);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0] == Vec3{1, 1, 1});
  CHECK(pts[1] == Vec3{2, 1, 1});
  CHECK(pts[2] == Vec3{3, 1, 1});

  const auto curved = trajectory_points({1, 2, 1}, {4, 1, 2}, {0.5, 0.2, 0.1}, {0.7, 0.3, 0.2}, 10);
  CHECK(curved[0] == Vec3{1, 2, 1});
  CHECK(curved[9].x == doctest::Approx(4 + 0.5 * std::sin(6.3)));
}

TEST_CASE("amplitude cap is the exact feasibility boundary") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 4.95);
  int nonzero = 0;
  for (int k = 0; k < 500; ++k) {
    const std::size_t L = 5 + k % 40;
    const double omega = std::uniform_real_distribution<double>(0, 4 * kPi / double(L - 1))(rng);
    const double p0 = u(rng), pL = u(rng);
    const double a = max_feasible_amplitude(p0, pL, omega, 5.0, L);
    if (a == 0.0) continue;
    ++nonzero;
    CHECK(feasible(p0, pL, a * (1 - 1e-9), omega, 5.0, L));
    CHECK_FALSE(feasible(p0, pL, a * (1 + 1e-6), omega, 5.0, L));
  }
  CHECK(nonzero > 400);
  CHECK(max_feasible_amplitude(1, 2, 0.0, 5, 10) == 0.0);
}

TEST_CASE("random trajectories stay inside the room") {
  std::mt19937_64 rng(4);
  const Room room = make_room({4, 3, 2.5}, 0.5);
  for (int k = 0; k < 10000; ++k) {
    const std::size_t L = 2 + k % 120;
    const auto tr = generate_trajectory(room, L, rng);
    REQUIRE(tr.points.size() == L);
    REQUIRE(tr.points[0] == tr.p0);
    for (std::size_t a = 0; a < 3; ++a) REQUIRE(tr.omega[a] * double(L - 1) <= 4 * kPi);
    for (const auto& p : tr.points) REQUIRE(room.contains_strictly(p));
  }
  CHECK_THROWS_AS(generate_trajectory(room, 1, rng), Error);
}

// Uniform endpoints let a path graze the array, where any per-frame angular
// bound fails; the bound is checked on paths keeping 1 m of clearance.
TEST_CASE("ground-truth DOA moves less than 45 degrees per frame") {
  const SceneConfig c;
  const FramingConfig f;
  const std::size_t L = f.num_frames(c.num_samples());
  CHECK(L == 103);
  std::mt19937_64 rng(5);
  double worst = 0;
  int checked = 0;
  for (int k = 0; k < 2000; ++k) {
    const auto d = sample_scene(c, rng);
    const auto tr = generate_trajectory(d.room, L, rng);
    double clearance = 1e9;
    for (const auto& p : tr.points) clearance = std::min(clearance, (p - d.array_origin).norm());
    if (clearance < 1.0) continue;
    ++checked;
    for (std::size_t t = 1; t < L; ++t) {
      worst = std::max(worst, angular_error(tr.points[t] - d.array_origin, tr.points[t - 1] - d.array_origin));
    }
  }
  MESSAGE("worst per-frame DOA change: " << rad2deg(worst) << " deg over " << checked);
  CHECK(checked > 1000);
  CHECK(worst < kPi / 4);
}

TEST_CASE("synthetic source activity mask is exact") {
  const FramingConfig f;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto src = synthetic_source(3.0 + double(seed), 16000, rng);
    REQUIRE(src.sample_activity);
    const auto& act = *src.sample_activity;
    REQUIRE(act.size() == src.signal.size());
    CHECK(std::find(act.begin(), act.end(), true) != act.end());
    CHECK(std::find(act.begin(), act.end(), false) != act.end());
    for (std::size_t i = 0; i < act.size(); ++i) {
      if (!act[i]) REQUIRE(src.signal[i] == 0.0);
    }
    const auto mask = frame_activity(act, f);
    for (std::size_t t = 0; t < mask.size(); ++t) {
      double e = 0;
      for (std::size_t k = 0; k < f.K; ++k) e += src.signal[t * f.hop + k] * src.signal[t * f.hop + k];
      REQUIRE(mask[t] == (e > 0.0));
    }
  }
}

TEST_CASE("synthetic source is band limited") {
  std::mt19937_64 rng(9);
  const auto src = synthetic_source(20.0, 16000, rng);
  // Welch periodogram, Hann windows of 1024 with 50% overlap.
  const std::size_t n = 1024;
  RealFft fft(n);
  const auto w = hann_window(n);
  std::vector<double> psd(fft.bins(), 0.0), seg(n);
  std::vector<std::complex<double>> spec(fft.bins());
  for (std::size_t s = 0; s + n <= src.signal.size(); s += n / 2) {
    for (std::size_t k = 0; k < n; ++k) seg[k] = src.signal[s + k] * w[k];
    fft.forward(seg, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) psd[k] += std::norm(spec[k]);
  }
  double pass = 0, stop = 0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double hz = double(k) * 16000.0 / double(n);
    if (hz < 5000) pass = std::max(pass, psd[k]);
    if (hz > 7000) stop = std::max(stop, psd[k]);
  }
  const double rejection_db = 10 * std::log10(pass / stop);
  MESSAGE("rejection above 7 kHz: " << rejection_db << " dB");
  CHECK(rejection_db > 60.0);
}

TEST_CASE("energy VAD agrees with the synthetic mask") {
  const FramingConfig f;
  std::size_t agree = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const auto src = synthetic_source(20.0, 16000, rng);
    const auto oracle = frame_activity(*src.sample_activity, f);
    EnergyVad vad;
    const auto est = vad_mask(src.signal, f, vad);
    for (std::size_t t = 0; t < est.size(); ++t) agree += est[t] == oracle[t];
    total += est.size();
  }
  const double rate = double(agree) / double(total);
  MESSAGE("VAD agreement: " << rate);
  CHECK(rate >= 0.95);
}

TEST_CASE("vad cleaning zeroes uncovered samples") {
  FramingConfig f;
  f.K = 8;
  f.hop = 4;
  std::vector<double> x(20, 1.0);
  const auto y = vad_clean(x, {false, true, false, false}, f);
  for (std::size_t i = 0; i < 20; ++i) CHECK(y[i] == ((i >= 4 && i < 12) ? 1.0 : 0.0));
}

TEST_CASE("trajectory sample shape and determinism") {
  SceneConfig c = small_config();
  c.duration = 20.0;
  c.rir_max_seconds = 0.05;
  const FramingConfig f;
  SyntheticSourceProvider src;
  std::mt19937_64 rng(derive_seed(42, 0));
  const auto s = synthesize_trajectory_sample(c, f, nao(), src, rng);
  CHECK(s.scene.gt_doa.size() == 103);
  CHECK(s.scene.vad.size() == 103);
  CHECK(s.scene.trajectory.points.size() == 103);
  CHECK(s.signals.num_channels() == 12);
  CHECK(s.signals.length() == 320000);
  for (std::size_t t = 0; t < 103; ++t) {
    const Doa g = unit_to_doa(s.scene.trajectory.points[t] - s.scene.array_origin);
    CHECK(g.theta == s.scene.gt_doa[t].theta);
    CHECK(g.phi == s.scene.gt_doa[t].phi);
  }
  for (const auto& ch : s.signals.channels) {
    for (double v : ch) REQUIRE(double(float(v)) == v);
  }

  c.duration = 3.0;
  std::mt19937_64 r1(derive_seed(7, 3)), r2(derive_seed(7, 3));
  const auto a = synthesize_trajectory_sample(c, f, nao(), src, r1);
  const auto b = synthesize_trajectory_sample(c, f, nao(), src, r2);
  CHECK(a.signals.channels == b.signals.channels);
  CHECK(a.scene.trajectory.points == b.scene.trajectory.points);
  CHECK(a.scene.vad == b.scene.vad);
  CHECK(scene_metadata(a.scene, f) == scene_metadata(b.scene, f));
  CHECK(derive_seed(7, 3) != derive_seed(7, 4));
  CHECK(derive_seed(7, 3) != derive_seed(8, 3));
}

// Noise-free: a voiced frame may hold only a few samples of a burst edge under
// the window taper, and any finite noise floor can dominate such a frame.
TEST_CASE("anechoic static source at a grid direction") {
  SceneConfig c = small_config();
  c.anechoic = true;
  c.static_source = true;
  c.snr_range = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  c.duration = 4.0;
  const FramingConfig f;
  const SphericalGrid grid(16, 32);
  const MicArray arr = nao();
  FeatureExtractor fx(arr, grid, f);
  std::mt19937_64 rng(11);
  for (auto [i, j] : {std::pair{5, 3}, std::pair{8, 16}, std::pair{11, 27}}) {
    SceneDraw draw;
    Vec3 p;
    do {
      draw = sample_scene(c, rng);
      p = draw.array_origin + grid.unit(i, j) * 1.2;
    } while (!draw.room.contains_strictly(p));
    REQUIRE(draw.room.beta == 0.0);
    Trajectory tr;
    tr.p0 = tr.pL = p;
    tr.points.assign(f.num_frames(c.num_samples()), p);
    const auto dry = synthetic_source(c.duration, c.fs, rng);
    const auto s = render_scene(c, f, arr, draw, tr, dry, rng);
    const auto feats = fx.compute(s.signals, s.scene.vad);
    int voiced = 0;
    for (std::size_t t = 0; t < feats.peaks.size(); ++t) {
      if (!s.scene.vad[t]) continue;
      ++voiced;
      std::size_t act = 0;
      for (std::size_t k = 0; k < f.K; ++k) act += (*dry.sample_activity)[t * f.hop + k];
      INFO("frame " << t << " active samples " << act);
      CHECK(feats.peaks[t].i == std::size_t(i));
      CHECK(feats.peaks[t].j == std::size_t(j));
    }
    CHECK(voiced > 0);
  }
}

TEST_CASE("wav directory provider concatenates and wraps") {
  const auto dir = std::filesystem::temp_directory_path() / "doatrack_corpus_test";
  std::filesystem::create_directories(dir);
  for (int k = 0; k < 2; ++k) {
    WavData w;
    w.channels.assign(1, std::vector<float>(1000, float(k + 1) * 0.25f));
    write_wav_float((dir / ("f" + std::to_string(k) + ".wav")).string(), w);
  }
  WavDirectoryProvider p(dir.string());
  CHECK(p.num_files() == 2);
  std::mt19937_64 rng(1);
  const auto s = p.next(0.25, 16000, rng);  // 4000 samples > corpus size
  CHECK(s.signal.size() == 4000);
  CHECK_FALSE(s.sample_activity.has_value());
  for (double v : s.signal) CHECK((v == 0.25 || v == 0.5));
  CHECK_THROWS_AS(p.next(1.0, 8000, rng), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("scene config json round trip") {
  SceneConfig c = small_config();
  c.static_source = true;
  nlohmann::json j = c;
  const auto d = j.get<SceneConfig>();
  CHECK(d.room_min == c.room_min);
  CHECK(d.t60_range == c.t60_range);
  CHECK(d.static_source);
  CHECK(d.rir_max_seconds == c.rir_max_seconds);
  nlohmann::json bad = {{"room_min", {5, 5, 5}}, {"room_max", {4, 4, 4}}};
  CHECK_THROWS_AS(bad.get<SceneConfig>(), Error);
}

TEST_CASE("metadata fields") {
  SceneConfig c = small_config();
  const FramingConfig f;
  SyntheticSourceProvider src;
  std::mt19937_64 rng(5);
  const auto s = synthesize_trajectory_sample(c, f, nao(), src, rng);
  const auto j = scene_metadata(s.scene, f);
  for (const char* key : {"room_dims_m", "t60_s", "beta", "snr_db", "array_origin_m", "array",
                          "trajectory", "frame_times_s", "gt_doa_deg", "vad"}) {
    CHECK(j.contains(key));
  }
  CHECK(j["frame_times_s"][0].get<double>() == doctest::Approx(0.128));
  CHECK(j["frame_times_s"][1].get<double>() == doctest::Approx(0.320));
  CHECK(j["array"] == "nao_head_12");
}
