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

#include "doatrack/evalcli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "doatrack/error.hpp"

namespace doatrack {

namespace {

constexpr const char* kSrpLabel = "srp-phat";

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormatError, "bad number '" + s + "'");
  }
}

Resolution model_resolution(const ModelSpec& s) { return {s.n_theta, s.n_phi}; }

double frame_center(std::size_t t, const FramingConfig& f) {
  return (static_cast<double>(t * f.hop) + 0.5 * static_cast<double>(f.K)) / f.fs;
}

// Errors of one scorer accumulated over the trajectories of a cell.
struct Accum {
  std::string model;
  Resolution res;
  Tracker* tracker = nullptr;  // null for the argmax
  std::vector<double> errors;
  std::vector<bool> vad;
};

std::vector<EvalResult> run_cell(const ExperimentGrid& grid, const SceneConfig& scene,
                                 const FramingConfig& framing, const MicArray& array,
                                 SourceProvider& source, const std::vector<Tracker*>& models,
                                 std::size_t a, std::size_t b) {
  const double t60 = grid.t60s[a], snr = grid.snrs[b];
  SceneConfig sc = scene;
  sc.snr_range = {snr, snr};
  sc.duration = grid.traj_seconds;
  sc.static_source = grid.static_source;
  if (t60 > 0.0) {
    sc.t60_range = {t60, t60};
  } else {
    sc.anechoic = true;
  }

  std::vector<Accum> acc;
  std::map<Resolution, std::unique_ptr<FeatureExtractor>> fx;
  for (const auto& r : grid.resolutions) {
    acc.push_back({kSrpLabel, r, nullptr, {}, {}});
    if (!fx.count(r)) fx[r] = std::make_unique<FeatureExtractor>(array, SphericalGrid(r.first, r.second), framing);
  }
  for (Tracker* m : models) {
    const Resolution r = model_resolution(m->spec());
    acc.push_back({model_kind_name(m->spec().kind), r, m, {}, {}});
    if (m->spec().kind != ModelKind::kBaselineGcc && !fx.count(r)) {
      fx[r] = std::make_unique<FeatureExtractor>(array, SphericalGrid(r.first, r.second), framing);
    }
  }
  const int lag_range = lag_range_for(array, framing.fs);
  const std::uint64_t cell_seed = derive_seed(derive_seed(grid.seed, a), b);

  for (std::size_t k = 0; k < grid.trajectories_per_cell; ++k) {
    std::mt19937_64 rng(derive_seed(cell_seed, k));
    const TrajectorySample sample = synthesize_trajectory_sample(sc, framing, array, source, rng);
    const auto& vad = sample.scene.vad;
    const auto gccs = compute_gccs(frame_signal(sample.signals, framing), lag_range);
    std::vector<Vec3> truth;
    for (const auto& d : sample.scene.gt_doa) truth.push_back(doa_to_unit(d));
    std::map<Resolution, FeatureSet> feats;
    for (auto& [r, ex] : fx) feats.emplace(r, ex->compute(gccs, vad));

    for (auto& ac : acc) {
      const std::size_t T = truth.size();
      if (!ac.tracker) {
        const auto& peaks = feats.at(ac.res).peaks;
        for (std::size_t t = 0; t < T; ++t) ac.errors.push_back(angular_error(doa_to_unit(peaks[t].doa), truth[t]));
      } else {
        const ModelSpec& spec = ac.tracker->spec();
        nn::Tensor<float> input;
        if (spec.kind == ModelKind::kBaselineGcc) {
          FeatureSet fs;
          fs.vad = vad;
          input = model_input(spec, fs, &gccs);
        } else {
          input = model_input(spec, feats.at(ac.res));
        }
        const auto est = ac.tracker->track(input);
        for (std::size_t t = 0; t < T; ++t) ac.errors.push_back(angular_error(est[t].unit, truth[t]));
      }
      ac.vad.insert(ac.vad.end(), vad.begin(), vad.end());
    }
  }

  std::vector<EvalResult> out;
  for (auto& ac : acc) {
    EvalResult r;
    r.model = ac.model;
    r.resolution = ac.res;
    r.t60 = t60;
    r.snr = snr;
    r.seed = grid.seed;
    r.n_traj = grid.trajectories_per_cell;
    r.rmsae_all = rmsae(ac.errors, ac.vad, true);
    if (std::find(ac.vad.begin(), ac.vad.end(), true) != ac.vad.end()) {
      r.rmsae_voiced = rmsae(ac.errors, ac.vad, false);
    }
    r.errors = std::move(ac.errors);
    r.vad = std::move(ac.vad);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

double rmsae(std::span<const double> errors, const std::vector<bool>& vad, bool include_silent) {
  if (errors.size() != vad.size()) throw Error(ErrorCode::kShapeError, "errors and VAD differ in length");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    if (!include_silent && !vad[t]) continue;
    sum += errors[t] * errors[t];
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kEmptySelection, "no frames selected for RMSAE");
  return rad2deg(std::sqrt(sum / static_cast<double>(n)));
}

std::string resolution_name(const Resolution& r) {
  return std::to_string(r.first) + "x" + std::to_string(r.second);
}

Resolution parse_resolution(const std::string& s) {
  const auto x = s.find_first_of("xX");
  const auto digit = [](char ch) { return ch >= '0' && ch <= '9'; };
  try {
    if (x == std::string::npos || !std::all_of(s.begin(), s.begin() + x, digit) ||
        !std::all_of(s.begin() + x + 1, s.end(), digit))
      throw std::invalid_argument(s);
    std::size_t u1 = 0, u2 = 0;
    const auto rows = std::stoul(s.substr(0, x), &u1);
    const auto cols = std::stoul(s.substr(x + 1), &u2);
    if (u1 != x || u2 != s.size() - x - 1 || rows == 0 || cols == 0) throw std::invalid_argument(s);
    return {rows, cols};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "resolution must look like 16x32, got '" + s + "'");
  }
}

void ExperimentGrid::validate() const {
  if (t60s.empty() || snrs.empty() || resolutions.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "experiment grid axes must be nonempty");
  }
  if (trajectories_per_cell == 0 || !(traj_seconds > 0.0) || threads == 0) {
    throw Error(ErrorCode::kInvalidArgument, "trajectories, duration and threads must be positive");
  }
}

void to_json(nlohmann::json& j, const ExperimentGrid& g) {
  std::vector<std::string> res;
  for (const auto& r : g.resolutions) res.push_back(resolution_name(r));
  j = {{"t60_s", g.t60s},
       {"snr_db", g.snrs},
       {"resolutions", res},
       {"trajectories_per_cell", g.trajectories_per_cell},
       {"traj_seconds", g.traj_seconds},
       {"static_source", g.static_source},
       {"seed", g.seed},
       {"threads", g.threads}};
}

void from_json(const nlohmann::json& j, ExperimentGrid& g) {
  g = ExperimentGrid{};
  g.t60s = j.value("t60_s", g.t60s);
  g.snrs = j.value("snr_db", g.snrs);
  if (j.contains("resolutions")) {
    g.resolutions.clear();
    for (const auto& r : j.at("resolutions")) g.resolutions.push_back(parse_resolution(r.get<std::string>()));
  }
  g.trajectories_per_cell = j.value("trajectories_per_cell", g.trajectories_per_cell);
  g.traj_seconds = j.value("traj_seconds", g.traj_seconds);
  g.static_source = j.value("static_source", g.static_source);
  g.seed = j.value("seed", g.seed);
  g.threads = j.value("threads", g.threads);
  g.validate();
}

std::vector<EvalResult> run_grid(const ExperimentGrid& grid, const SceneConfig& scene,
                                 const FramingConfig& framing, const MicArray& array,
                                 SourceProvider& source, const std::vector<Tracker*>& models) {
  grid.validate();
  scene.validate();
  framing.validate();
  const std::size_t n_cells = grid.t60s.size() * grid.snrs.size();
  std::vector<std::vector<EvalResult>> cells(n_cells);
  std::vector<std::exception_ptr> errors(n_cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < n_cells; c = next++) {
      try {
        cells[c] = run_cell(grid, scene, framing, array, source, models, c / grid.snrs.size(),
                            c % grid.snrs.size());
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min(grid.threads, n_cells);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<EvalResult> out;
  for (auto& c : cells)
    for (auto& r : c) out.push_back(std::move(r));
  std::stable_sort(out.begin(), out.end(), [](const EvalResult& x, const EvalResult& y) {
    return std::tie(x.model, x.resolution, x.t60, x.snr) < std::tie(y.model, y.resolution, y.t60, y.snr);
  });
  return out;
}

void emit_plot_data(const std::vector<EvalResult>& results, std::ostream& out) {
  out << kPlotHeader << '\n';
  for (const auto& r : results) {
    out << r.model << ',' << resolution_name(r.resolution) << ',' << fmt(r.t60) << ',' << fmt(r.snr)
        << ',' << fmt(r.rmsae_voiced.value_or(std::numeric_limits<double>::quiet_NaN())) << ','
        << fmt(r.rmsae_all) << ',' << r.n_traj << '\n';
  }
}

std::vector<PlotRow> parse_plot_data(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPlotHeader) {
    throw Error(ErrorCode::kFormatError, "missing plot data header");
  }
  std::vector<PlotRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 7) throw Error(ErrorCode::kFormatError, "plot row needs 7 columns: " + line);
    rows.push_back({c[0], c[1], parse_double(c[2]), parse_double(c[3]), parse_double(c[4]),
                    parse_double(c[5]), static_cast<std::size_t>(parse_double(c[6]))});
  }
  return rows;
}

VadMode parse_vad_mode(const std::string& s) {
  if (s == "energy") return VadMode::kEnergy;
  if (s == "all") return VadMode::kAll;
  if (s == "sidecar") return VadMode::kSidecar;
  throw Error(ErrorCode::kInvalidArgument, "unknown VAD mode '" + s + "'");
}

std::vector<bool> track_vad(const MicSignals& signals, const TrackOptions& opts) {
  switch (opts.vad) {
    case VadMode::kEnergy: {
      EnergyVad vad;
      return vad_mask(signals, opts.framing, vad);
    }
    case VadMode::kAll:
      return std::vector<bool>(opts.framing.num_frames(signals.length()), true);
    case VadMode::kSidecar:
      break;
  }
  throw Error(ErrorCode::kInvalidArgument, "sidecar VAD needs a file");
}

std::vector<TrackRow> track_signals(const MicSignals& signals, const MicArray& array,
                                    Tracker* tracker, const TrackOptions& opts,
                                    const std::vector<bool>& vad) {
  const FramingConfig& framing = opts.framing;
  framing.validate();
  if (signals.num_channels() != array.size()) {
    throw Error(ErrorCode::kFormatError, "signal has " + std::to_string(signals.num_channels()) +
                                             " channels, array has " + std::to_string(array.size()));
  }
  const auto gccs = compute_gccs(frame_signal(signals, framing), lag_range_for(array, framing.fs));
  const std::size_t T = gccs.size();
  if (vad.size() != T) throw Error(ErrorCode::kShapeError, "VAD mask length differs from frame count");

  std::vector<TrackRow> rows(T);
  for (std::size_t t = 0; t < T; ++t) {
    rows[t].time_s = frame_center(t, framing);
    rows[t].vad = vad[t];
  }
  auto set_doa = [](TrackRow& row, const Doa& d) {
    row.azimuth_deg = rad2deg(d.phi);
    row.elevation_deg = rad2deg(d.theta);
  };

  if (!tracker) {
    const Resolution r = opts.srp_resolution;
    const FeatureExtractor fx(array, SphericalGrid(r.first, r.second), framing);
    const FeatureSet feats = fx.compute(gccs, vad);
    for (std::size_t t = 0; t < T; ++t) {
      if (vad[t]) {
        set_doa(rows[t], feats.peaks[t].doa);
      } else {
        rows[t].degenerate = true;
      }
    }
    return rows;
  }

  const ModelSpec& spec = tracker->spec();
  nn::Tensor<float> input;
  if (spec.kind == ModelKind::kBaselineGcc) {
    FeatureSet fs;
    fs.vad = vad;
    input = model_input(spec, fs, &gccs);
  } else {
    const FeatureExtractor fx(array, SphericalGrid(spec.n_theta, spec.n_phi), framing);
    input = model_input(spec, fx.compute(gccs, vad));
  }
  const auto est = tracker->track(input);
  const std::size_t rf = tracker->receptive_field();
  std::optional<std::size_t> last_voiced;
  for (std::size_t t = 0; t < T; ++t) {
    if (vad[t]) last_voiced = t;
    const bool heard = last_voiced && t - *last_voiced < rf;
    if (!heard || est[t].degenerate) {
      rows[t].degenerate = true;
    } else {
      set_doa(rows[t], est[t].doa);
    }
  }
  return rows;
}

MicSignals to_signals(const WavData& wav) {
  MicSignals s;
  s.fs = wav.fs;
  for (const auto& ch : wav.channels) s.channels.emplace_back(ch.begin(), ch.end());
  return s;
}

std::vector<TrackRow> track_file(const std::string& wav_path, const MicArray& array,
                                 const std::optional<std::string>& checkpoint,
                                 const TrackOptions& opts) {
  const WavData wav = read_wav(wav_path);
  if (wav.channels.size() != array.size()) {
    throw Error(ErrorCode::kFormatError, wav_path + " has " + std::to_string(wav.channels.size()) +
                                             " channels, array has " + std::to_string(array.size()));
  }
  if (static_cast<double>(wav.fs) != opts.framing.fs) {
    throw Error(ErrorCode::kFormatError, wav_path + " sample rate " + std::to_string(wav.fs) +
                                             " differs from the framing rate");
  }
  const MicSignals sig = to_signals(wav);
  std::vector<bool> vad;
  if (opts.vad == VadMode::kSidecar) {
    std::ifstream in(wav_path + ".json");
    if (!in) throw Error(ErrorCode::kIoError, "no sidecar " + wav_path + ".json");
    try {
      vad = nlohmann::json::parse(in).at("vad").get<std::vector<bool>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormatError, std::string("sidecar: ") + e.what());
    }
  } else {
    vad = track_vad(sig, opts);
  }
  if (!checkpoint) return track_signals(sig, array, nullptr, opts, vad);
  Tracker tracker = tracker_from_checkpoint(load_checkpoint(*checkpoint));
  return track_signals(sig, array, &tracker, opts, vad);
}

void write_track_csv(const std::vector<TrackRow>& rows, std::ostream& out) {
  out << kTrackHeader << '\n';
  for (const auto& r : rows) {
    out << fmt(r.time_s) << ',' << fmt(r.azimuth_deg) << ',' << fmt(r.elevation_deg) << ','
        << (r.vad ? 1 : 0) << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
}

void to_json(nlohmann::json& j, const AppConfig& c) {
  j = {{"scene", c.scene}, {"framing", c.framing}, {"train", c.train}, {"eval", c.eval}};
}

void from_json(const nlohmann::json& j, AppConfig& c) {
  c = AppConfig{};
  if (j.contains("scene")) c.scene = j.at("scene").get<SceneConfig>();
  if (j.contains("framing")) c.framing = j.at("framing").get<FramingConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("eval")) c.eval = j.at("eval").get<ExperimentGrid>();
}

AppConfig load_app_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path);
  try {
    return nlohmann::json::parse(in).get<AppConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, path + ": " + e.what());
  }
}

}  // namespace doatrack
