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

// Metrics, experiment grids, file tracking and the shared app config.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "doatrack/models.hpp"
#include "doatrack/wav.hpp"

namespace doatrack {

/// sqrt(mean(e^2)) over the selected frames, in degrees. errors are radians.
/// Throws ShapeError on size mismatch, EmptySelection when nothing is selected.
double rmsae(std::span<const double> errors, const std::vector<bool>& vad, bool include_silent);

using Resolution = std::pair<std::size_t, std::size_t>;

std::string resolution_name(const Resolution& r);  // "16x32"
Resolution parse_resolution(const std::string& s);  // accepts RxC

struct ExperimentGrid {
  std::vector<double> t60s = {0.2, 0.4, 0.6, 0.8, 1.0, 1.3};
  std::vector<double> snrs = {30.0, 5.0};
  std::vector<Resolution> resolutions = {{16, 32}};
  std::size_t trajectories_per_cell = 50;
  double traj_seconds = 20.0;
  bool static_source = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentGrid& g);
void from_json(const nlohmann::json& j, ExperimentGrid& g);

struct EvalResult {
  std::string model;  // "srp-phat" for the map argmax, else the model kind
  Resolution resolution;
  double t60 = 0.0;
  double snr = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_traj = 0;
  std::vector<double> errors;  // radians, frames of all trajectories pooled
  std::vector<bool> vad;
  std::optional<double> rmsae_voiced;
  double rmsae_all = 0.0;
};

/// Per-frame angular errors of the SRP-PHAT argmax and of every tracker on
/// the same seeded test trajectories. Each tracker is scored at its own
/// resolution; the argmax at every grid resolution. Results are sorted by
/// (model, resolution, t60, snr). Trackers and the source provider are
/// shared read-only across worker threads.
std::vector<EvalResult> run_grid(const ExperimentGrid& grid, const SceneConfig& scene,
                                 const FramingConfig& framing, const MicArray& array,
                                 SourceProvider& source, const std::vector<Tracker*>& models);

struct PlotRow {
  std::string model;
  std::string resolution;
  double t60_s = 0.0;
  double snr_db = 0.0;
  double rmsae_voiced_deg = 0.0;  // NaN when no voiced frame exists
  double rmsae_all_deg = 0.0;
  std::size_t n_traj = 0;
};

inline constexpr const char* kPlotHeader =
    "model,resolution,t60_s,snr_db,rmsae_voiced_deg,rmsae_all_deg,n_traj";

void emit_plot_data(const std::vector<EvalResult>& results, std::ostream& out);
std::vector<PlotRow> parse_plot_data(std::istream& in);

enum class VadMode { kEnergy, kAll, kSidecar };
VadMode parse_vad_mode(const std::string& s);  // "energy", "all", "sidecar"

struct TrackOptions {
  FramingConfig framing;
  VadMode vad = VadMode::kEnergy;
  Resolution srp_resolution = {64, 128};  // argmax fallback without a model
};

struct TrackRow {
  double time_s = 0.0;  // frame center
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;  // angle from +z
  bool vad = false;
  bool degenerate = false;
};

inline constexpr const char* kTrackHeader = "time_s,azimuth_deg,elevation_deg,vad,degenerate";

/// Causal per-frame tracking. Without a tracker the SRP-PHAT argmax is
/// reported. A frame is degenerate, with DOA (0, 0, 1), when it is silent
/// (argmax mode) or when no voiced frame falls in the model's receptive field.
std::vector<TrackRow> track_signals(const MicSignals& signals, const MicArray& array,
                                    Tracker* tracker, const TrackOptions& opts,
                                    const std::vector<bool>& vad);

/// VAD mask for a signal under the given mode (kSidecar is not handled here).
std::vector<bool> track_vad(const MicSignals& signals, const TrackOptions& opts);

/// WAV channel count must match the array (FormatError otherwise). The
/// sidecar mode reads the "vad" list of wav_path + ".json".
std::vector<TrackRow> track_file(const std::string& wav_path, const MicArray& array,
                                 const std::optional<std::string>& checkpoint,
                                 const TrackOptions& opts);

void write_track_csv(const std::vector<TrackRow>& rows, std::ostream& out);

MicSignals to_signals(const WavData& wav);

// Config file: JSON object with optional sections "scene", "framing",
// "train" and "eval".
struct AppConfig {
  SceneConfig scene;
  FramingConfig framing;
  TrainConfig train;
  ExperimentGrid eval;
};

void to_json(nlohmann::json& j, const AppConfig& c);
void from_json(const nlohmann::json& j, AppConfig& c);
AppConfig load_app_config(const std::string& path);

}  // namespace doatrack
