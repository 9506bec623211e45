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

// Random acoustic scenes, source trajectories and the on-demand synthesis of
// training and test recordings.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doatrack/geometry.hpp"
#include "doatrack/roomsim.hpp"
#include "doatrack/srpfeat.hpp"

namespace doatrack {

struct SceneConfig {
  Vec3 room_min{3.0, 3.0, 2.5};
  Vec3 room_max{10.0, 8.0, 6.0};
  std::array<double, 2> snr_range{5.0, 30.0};  // dB
  std::array<double, 2> t60_range{0.2, 1.3};   // s
  double fs = 16000.0;
  double duration = 20.0;  // s
  double wall_margin_fraction = 0.1;

  // RIRs are simulated for min(t60, rir_max_seconds), never below 50 ms.
  double rir_max_seconds = 1.3;
  bool anechoic = false;
  bool static_source = false;

  void validate() const;
  std::size_t num_samples() const;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);
void to_json(nlohmann::json& j, const FramingConfig& c);
void from_json(const nlohmann::json& j, FramingConfig& c);

struct SceneDraw {
  Room room;
  Vec3 array_origin;
  double snr_db = 0.0;
  double t60 = 0.0;
};

/// Uniform room, T60 and SNR; array origin inside the wall margins and in the
/// lower half of the room. Anechoic configs report t60 = 0.
SceneDraw sample_scene(const SceneConfig& cfg, std::mt19937_64& rng);

// p_i = p0 + i / (L - 1) * (pL - p0) + A * sin(omega * i), per axis.
struct Trajectory {
  std::vector<Vec3> points;
  Vec3 p0, pL;
  Vec3 amp;
  Vec3 omega;  // radians per point index
};

/// Points of the line-plus-sine path for the given parameters.
std::vector<Vec3> trajectory_points(const Vec3& p0, const Vec3& pL, const Vec3& amp,
                                    const Vec3& omega, std::size_t L);

/// Largest amplitude on one axis that keeps every point strictly inside
/// [0, length], given the straight line and omega.
double max_feasible_amplitude(double p0, double pL, double omega, double length,
                              std::size_t L);

Trajectory generate_trajectory(const Room& room, std::size_t L, std::mt19937_64& rng);

/// L copies of one uniform point.
Trajectory static_trajectory(const Room& room, std::size_t L, std::mt19937_64& rng);

struct DrySource {
  std::vector<double> signal;
  // Exact per-sample activity when the generator knows it (synthetic source).
  std::optional<std::vector<bool>> sample_activity;
  std::string description;
};

/// Windowed-sinc low-pass noise bursts: 0.3-2 s on, 0.1-1 s off, raised-cosine
/// edges and slow amplitude modulation. Active samples are nonzero and
/// inactive samples are exactly zero.
DrySource synthetic_source(double duration, double fs, std::mt19937_64& rng);

/// A frame is active when any of its samples is.
std::vector<bool> frame_activity(const std::vector<bool>& sample_activity,
                                 const FramingConfig& framing);

class SourceProvider {
 public:
  virtual ~SourceProvider() = default;
  virtual DrySource next(double duration, double fs, std::mt19937_64& rng) = 0;
};

class SyntheticSourceProvider : public SourceProvider {
 public:
  DrySource next(double duration, double fs, std::mt19937_64& rng) override;
};

// Mono WAV files of one directory (sorted by name). Each request starts at a
// random file and offset and concatenates the following files, wrapping.
class WavDirectoryProvider : public SourceProvider {
 public:
  explicit WavDirectoryProvider(const std::string& dir);
  DrySource next(double duration, double fs, std::mt19937_64& rng) override;
  std::size_t num_files() const { return files_.size(); }

 private:
  std::vector<std::string> files_;
  std::vector<std::vector<double>> audio_;
  double fs_ = 0.0;
};

struct AcousticScene {
  Room room;
  Vec3 array_origin;
  std::string array_name;
  Trajectory trajectory;
  double snr_db = 0.0;
  double rir_seconds = 0.0;
  std::string source;
  std::vector<bool> vad;
  std::vector<Doa> gt_doa;      // array frame, one per frame
  std::vector<double> frame_times;  // frame centers, s
};

struct TrajectorySample {
  MicSignals signals;
  AcousticScene scene;
};

/// Zeroes every sample that no active frame covers.
std::vector<double> vad_clean(std::span<const double> dry, const std::vector<bool>& frame_mask,
                              const FramingConfig& framing);

// Full pipeline: dry source, VAD mask and cleaning, scene draw, trajectory
// with one point per frame, rendering, noise at the drawn SNR. Point i drives
// samples [i * hop, (i + 1) * hop). Output samples are float32-representable.
TrajectorySample synthesize_trajectory_sample(const SceneConfig& cfg,
                                              const FramingConfig& framing,
                                              const MicArray& array,
                                              SourceProvider& source,
                                              std::mt19937_64& rng);

/// The deterministic tail of the pipeline for a given draw and trajectory;
/// rng only feeds the sensor noise.
TrajectorySample render_scene(const SceneConfig& cfg, const FramingConfig& framing,
                              const MicArray& array, const SceneDraw& draw,
                              Trajectory trajectory, const DrySource& dry,
                              std::mt19937_64& rng);

/// Per-sample seed from (master seed, sample index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

nlohmann::json scene_metadata(const AcousticScene& scene, const FramingConfig& framing);

/// Multichannel float WAV plus path + ".json" metadata.
void write_trajectory_sample(const std::string& wav_path, const TrajectorySample& sample,
                             const FramingConfig& framing);

}  // namespace doatrack
