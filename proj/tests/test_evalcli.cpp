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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doatrack/error.hpp"
#include "doatrack/evalcli.hpp"

using namespace doatrack;

namespace {

MicArray nao() { return MicArray::load(std::string(DOATRACK_DATA_DIR) + "/arrays/nao_head.json"); }

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("doatrack_eval_" + name)).string();
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInvalidArgument;
}

SceneConfig short_scene(double seconds) {
  SceneConfig c;
  c.duration = seconds;
  c.t60_range = {0.2, 0.3};
  c.rir_max_seconds = 0.3;
  return c;
}

bool same_rows(const std::vector<TrackRow>& a, const std::vector<TrackRow>& b, std::size_t n) {
  if (a.size() < n || b.size() < n) return false;
  for (std::size_t t = 0; t < n; ++t) {
    if (a[t].time_s != b[t].time_s || a[t].azimuth_deg != b[t].azimuth_deg ||
        a[t].elevation_deg != b[t].elevation_deg || a[t].vad != b[t].vad ||
        a[t].degenerate != b[t].degenerate)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("rmsae arithmetic") {
  const double ten = deg2rad(10.0);
  CHECK(rmsae(std::vector<double>(5, ten), std::vector<bool>(5, true), false) == doctest::Approx(10.0));
  CHECK(rmsae(std::vector<double>{0.0, deg2rad(90.0)}, {true, true}, false) == doctest::Approx(63.6396).epsilon(1e-5));
  CHECK(rmsae(std::vector<double>{ten, deg2rad(50.0)}, {true, false}, false) == doctest::Approx(10.0));
  CHECK(rmsae(std::vector<double>{ten, ten}, {false, false}, true) == doctest::Approx(10.0));
  CHECK(code_of([] { rmsae(std::vector<double>{1.0, 2.0}, {false, false}, false); }) == ErrorCode::kEmptySelection);
  CHECK(code_of([] { rmsae(std::vector<double>{1.0}, {true, true}, true); }) == ErrorCode::kShapeError);
  CHECK(code_of([] { rmsae(std::vector<double>{}, {}, true); }) == ErrorCode::kEmptySelection);
}

TEST_CASE("resolution strings") {
  CHECK(parse_resolution("16x32") == Resolution{16, 32});
  CHECK(parse_resolution("64X128") == Resolution{64, 128});
  CHECK(resolution_name({4, 8}) == "4x8");
  for (const char* bad : {"16", "x32", "16x", "16x32a", "0x8", "-4x8"}) {
    CHECK(code_of([&] { parse_resolution(bad); }) == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("plot data format") {
  EvalResult a;
  a.model = "cross3d";
  a.resolution = {16, 32};
  a.t60 = 0.6;
  a.snr = 5;
  a.n_traj = 50;
  a.rmsae_voiced = 12.3456789123;
  a.rmsae_all = 1.0 / 3.0;
  EvalResult b = a;
  b.model = "srp-phat";
  b.rmsae_voiced.reset();
  std::stringstream ss;
  emit_plot_data({a, b}, ss);
  std::string header;
  std::getline(std::stringstream(ss.str()), header);
  CHECK(header == "model,resolution,t60_s,snr_db,rmsae_voiced_deg,rmsae_all_deg,n_traj");
  const auto rows = parse_plot_data(ss);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].model == "cross3d");
  CHECK(rows[0].resolution == "16x32");
  CHECK(std::abs(rows[0].rmsae_voiced_deg - *a.rmsae_voiced) < 1e-6);
  CHECK(std::abs(rows[0].rmsae_all_deg - a.rmsae_all) < 1e-6);
  CHECK(std::abs(rows[0].t60_s - 0.6) < 1e-6);
  CHECK(rows[0].n_traj == 50);
  CHECK(std::isnan(rows[1].rmsae_voiced_deg));
  std::stringstream bad("model,res\n");
  CHECK(code_of([&] { parse_plot_data(bad); }) == ErrorCode::kFormatError);
}

TEST_CASE("grid runs are deterministic and thread independent") {
  const MicArray arr = nao();
  const FramingConfig framing;
  SyntheticSourceProvider src;
  ExperimentGrid g;
  g.t60s = {0.2, 0.3};
  g.snrs = {30.0};
  g.resolutions = {{4, 8}, {8, 16}};
  g.trajectories_per_cell = 2;
  g.traj_seconds = 2.0;
  g.seed = 5;
  SceneConfig sc = short_scene(2.0);
  Tracker c3(ModelSpec::cross3d(4, 8), 1);
  Tracker mx(ModelSpec::baseline_max(8, 16), 2);
  Tracker gc(ModelSpec::baseline_gcc(arr, framing.fs), 3);
  const std::vector<Tracker*> models{&c3, &mx, &gc};

  auto csv = [&](std::size_t threads) {
    ExperimentGrid gg = g;
    gg.threads = threads;
    std::stringstream ss;
    const auto res = run_grid(gg, sc, framing, arr, src, models);
    CHECK(res.size() == (g.resolutions.size() + models.size()) * g.t60s.size() * g.snrs.size());
    for (const auto& r : res) {
      CHECK(r.rmsae_all >= 0.0);
      CHECK(r.n_traj == 2);
      CHECK(r.errors.size() == r.vad.size());
    }
    emit_plot_data(res, ss);
    return ss.str();
  };
  const std::string one = csv(1);
  CHECK(one == csv(1));
  CHECK(one == csv(2));
  std::stringstream ss(one);
  const auto rows = parse_plot_data(ss);
  CHECK(rows.size() == 10);
  CHECK(rows.front().model == "baseline-gcc");
  CHECK(rows.back().model == "srp-phat");

  // The same trajectories reach every scorer.
  const auto res = run_grid(g, sc, framing, arr, src, models);
  for (const auto& r : res) {
    for (const auto& q : res)
      if (q.t60 == r.t60) CHECK(r.vad == q.vad);
  }

  ExperimentGrid empty = g;
  empty.snrs.clear();
  CHECK(code_of([&] { run_grid(empty, sc, framing, arr, src, models); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("file tracking matches the in-memory pipeline") {
  const MicArray arr = nao();
  const FramingConfig framing;
  SyntheticSourceProvider src;
  std::mt19937_64 rng(17);
  const auto sample = synthesize_trajectory_sample(short_scene(4.0), framing, arr, src, rng);
  const std::string wav = temp_path("scene.wav");
  write_trajectory_sample(wav, sample, framing);

  TrackOptions opts;
  opts.srp_resolution = {16, 32};
  for (VadMode mode : {VadMode::kEnergy, VadMode::kSidecar, VadMode::kAll}) {
    opts.vad = mode;
    const auto vad = mode == VadMode::kSidecar ? sample.scene.vad : track_vad(sample.signals, opts);
    const auto mem = track_signals(sample.signals, arr, nullptr, opts, vad);
    const auto file = track_file(wav, arr, std::nullopt, opts);
    CHECK(same_rows(mem, file, mem.size()));
    CHECK(mem.size() == file.size());
  }

  Tracker tr(ModelSpec::cross3d(8, 16), 4);
  const std::string ck = temp_path("model.sstc");
  save_checkpoint(ck, tr);
  opts.vad = VadMode::kSidecar;
  const auto mem = track_signals(sample.signals, arr, &tr, opts, sample.scene.vad);
  const auto file = track_file(wav, arr, ck, opts);
  CHECK(same_rows(mem, file, mem.size()));

  std::stringstream out;
  write_track_csv(file, out);
  std::string line;
  std::getline(out, line);
  CHECK(line == "time_s,azimuth_deg,elevation_deg,vad,degenerate");
  std::size_t n = 0;
  while (std::getline(out, line)) ++n;
  CHECK(n == file.size());
  CHECK(file[0].time_s == doctest::Approx(0.128));
  CHECK(file[1].time_s - file[0].time_s == doctest::Approx(0.192));
  std::remove(ck.c_str());
  std::remove(wav.c_str());
  std::remove((wav + ".json").c_str());
}

TEST_CASE("tracking is causal under truncation") {
  const MicArray arr = nao();
  const FramingConfig framing;
  SyntheticSourceProvider src;
  std::mt19937_64 rng(23);
  const auto sample = synthesize_trajectory_sample(short_scene(6.0), framing, arr, src, rng);
  TrackOptions opts;
  opts.srp_resolution = {8, 16};
  Tracker tr(ModelSpec::cross3d(8, 16), 6);
  MicSignals cut = sample.signals;
  const std::size_t keep = 3 * 16000 + 1234;
  for (auto& ch : cut.channels) ch.resize(keep);
  const std::size_t frames = framing.num_frames(keep);
  for (Tracker* m : {static_cast<Tracker*>(nullptr), &tr}) {
    const auto full = track_signals(sample.signals, arr, m, opts, track_vad(sample.signals, opts));
    const auto part = track_signals(cut, arr, m, opts, track_vad(cut, opts));
    CHECK(part.size() == frames);
    CHECK(same_rows(full, part, frames));
  }
}

TEST_CASE("all-silent recording") {
  const MicArray arr = nao();
  TrackOptions opts;
  opts.srp_resolution = {8, 16};
  WavData w;
  w.channels.assign(arr.size(), std::vector<float>(16000 * 3, 0.0f));
  const std::string wav = temp_path("silent.wav");
  write_wav_float(wav, w);
  Tracker tr(ModelSpec::cross3d(4, 8), 1);
  const std::string ck = temp_path("silent.sstc");
  save_checkpoint(ck, tr);
  for (const auto& c : {std::optional<std::string>{}, std::optional<std::string>{ck}}) {
    const auto rows = track_file(wav, arr, c, opts);
    CHECK(rows.size() == 15);
    for (const auto& r : rows) {
      CHECK_FALSE(r.vad);
      CHECK(r.degenerate);
      CHECK(r.azimuth_deg == 0.0);
      CHECK(r.elevation_deg == 0.0);
    }
  }
  w.channels.pop_back();
  write_wav_float(wav, w);
  CHECK(code_of([&] { track_file(wav, arr, std::nullopt, opts); }) == ErrorCode::kFormatError);
  w.channels.assign(arr.size(), std::vector<float>(16000 * 3, 0.0f));
  w.fs = 8000;
  write_wav_float(wav, w);
  CHECK(code_of([&] { track_file(wav, arr, std::nullopt, opts); }) == ErrorCode::kFormatError);
  std::remove(wav.c_str());
  std::remove(ck.c_str());
}

TEST_CASE("static anechoic source median within one 64x128 cell") {
  const MicArray arr = nao();
  const FramingConfig framing;
  SyntheticSourceProvider src;
  SceneConfig sc;
  sc.duration = 5.0;
  sc.anechoic = true;
  sc.static_source = true;
  sc.snr_range = {30.0, 30.0};
  const SphericalGrid grid(64, 128);
  const double dtheta = grid.thetas()[1] - grid.thetas()[0];
  const double dphi = grid.phis()[1] - grid.phis()[0];
  TrackOptions opts;
  opts.vad = VadMode::kSidecar;
  for (std::uint64_t seed : {1, 2, 3}) {
    std::mt19937_64 rng(seed);
    const auto s = synthesize_trajectory_sample(sc, framing, arr, src, rng);
    const auto rows = track_signals(s.signals, arr, nullptr, opts, s.scene.vad);
    const Doa truth = s.scene.gt_doa.front();
    std::vector<double> de, da;
    for (const auto& r : rows) {
      if (!r.vad) continue;
      de.push_back(deg2rad(r.elevation_deg) - truth.theta);
      da.push_back(std::remainder(deg2rad(r.azimuth_deg) - truth.phi, 2 * kPi));
    }
    REQUIRE(de.size() > 5);
    auto median = [](std::vector<double> v) {
      std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
      return v[v.size() / 2];
    };
    INFO("seed " << seed);
    CHECK(std::abs(median(de)) <= dtheta);
    CHECK(std::abs(median(da)) <= dphi);
  }
}

TEST_CASE("app config sections") {
  const std::string path = temp_path("cfg.json");
  std::ofstream(path) << R"({"scene": {"duration": 5, "t60_range": [0.3, 0.5]},
                             "framing": {"K": 4096, "hop": 3072, "fs": 16000, "window": "hann"},
                             "train": {"epochs": 2, "phase1_epochs": 1},
                             "eval": {"t60_s": [0.2], "resolutions": ["64x128"], "trajectories_per_cell": 20}})";
  const AppConfig c = load_app_config(path);
  CHECK(c.scene.duration == 5.0);
  CHECK(c.scene.t60_range[1] == 0.5);
  CHECK(c.train.epochs == 2);
  CHECK(c.train.phase2_batch == 10);
  CHECK(c.eval.resolutions == std::vector<Resolution>{{64, 128}});
  CHECK(c.eval.trajectories_per_cell == 20);
  CHECK(ExperimentGrid{}.trajectories_per_cell == 50);
  const nlohmann::json j = c;
  CHECK(j.get<AppConfig>().eval.t60s == c.eval.t60s);
  std::ofstream(path) << "{not json";
  CHECK(code_of([&] { load_app_config(path); }) == ErrorCode::kFormatError);
  std::ofstream(path) << R"({"train": {"epochs": 2, "phase1_epochs": 5}})";
  CHECK(code_of([&] { load_app_config(path); }) == ErrorCode::kInvalidArgument);
  std::remove(path.c_str());
}
