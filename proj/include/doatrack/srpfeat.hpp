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

// Framing, VAD gating, GCC-PHAT, SRP-PHAT power maps and the network input
// tensor built from them.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "doatrack/geometry.hpp"
#include "doatrack/roomsim.hpp"

namespace doatrack {

struct FramingConfig {
  std::size_t K = 4096;
  std::size_t hop = 3072;
  double fs = 16000.0;
  std::string window = "hann";

  void validate() const;
  double hop_seconds() const { return static_cast<double>(hop) / fs; }
  double window_seconds() const { return static_cast<double>(K) / fs; }
  /// Throws TooShort when len < K.
  std::size_t num_frames(std::size_t len) const;
};

/// Symmetric Hann window.
std::vector<double> hann_window(std::size_t n);

class Frames {
 public:
  Frames(std::size_t n_channels, std::size_t n_frames, std::size_t frame_len);

  std::size_t num_channels() const { return n_channels_; }
  std::size_t num_frames() const { return n_frames_; }
  std::size_t frame_len() const { return frame_len_; }
  std::span<const double> frame(std::size_t ch, std::size_t t) const {
    return {data_.data() + (ch * n_frames_ + t) * frame_len_, frame_len_};
  }
  std::span<double> frame(std::size_t ch, std::size_t t) {
    return {data_.data() + (ch * n_frames_ + t) * frame_len_, frame_len_};
  }

 private:
  std::size_t n_channels_, n_frames_, frame_len_;
  std::vector<double> data_;
};

/// Hann-windowed frames, T = floor((len - K) / hop) + 1.
Frames frame_signal(const MicSignals& sig, const FramingConfig& cfg);

// Voice activity detection on unwindowed frames. Implementations may keep
// state across calls; frames must be fed in temporal order.
class VoiceActivityDetector {
 public:
  virtual ~VoiceActivityDetector() = default;
  virtual bool is_speech(std::span<const double> frame) = 0;
  virtual void reset() {}
};

// Speech when frame RMS > max(abs_floor, rel_threshold * running max RMS).
// A detection keeps the following hangover_frames flagged as speech.
class EnergyVad : public VoiceActivityDetector {
 public:
  struct Options {
    double abs_floor = 1e-5;
    double rel_threshold = 0.01;
    int hangover_frames = 0;
  };
  EnergyVad() = default;
  explicit EnergyVad(Options opts) : opts_(opts) {}

  bool is_speech(std::span<const double> frame) override;
  void reset() override;

 private:
  Options opts_;
  double running_max_ = 0.0;
  int hangover_left_ = 0;
};

/// Frames a mono signal (no window) and runs the detector frame by frame.
std::vector<bool> vad_mask(std::span<const double> signal, const FramingConfig& cfg,
                           VoiceActivityDetector& vad);

/// Same, on the channel-averaged frame energy of a multichannel signal.
std::vector<bool> vad_mask(const MicSignals& sig, const FramingConfig& cfg,
                           VoiceActivityDetector& vad);

/// GCC-PHAT over lags [-lag_range, lag_range]; out[lag_range + tau].
/// With x_n(t) = x_m(t - d) the peak sits at tau = +d.
std::vector<double> gcc_phat(std::span<const double> frame_n,
                             std::span<const double> frame_m, int lag_range);

/// Smallest lag range covering every physical TDOA: ceil(d_max * fs / c).
int lag_range_for(const MicArray& array, double fs, double c = kDefaultSpeedOfSound);

// GCCs of one frame for all sensor pairs, autoterms included. Stored for
// n <= m; R_mn(tau) is served as R_nm(-tau).
class GccSet {
 public:
  GccSet(std::size_t n_mics, int lag_range);

  std::size_t n_mics() const { return n_mics_; }
  int lag_range() const { return lag_range_; }
  std::size_t num_lags() const { return 2 * static_cast<std::size_t>(lag_range_) + 1; }

  double operator()(std::size_t n, std::size_t m, int lag) const;
  std::span<double> pair(std::size_t n, std::size_t m);  // requires n <= m
  std::span<const double> pair(std::size_t n, std::size_t m) const;

 private:
  std::size_t index(std::size_t n, std::size_t m) const;

  std::size_t n_mics_;
  int lag_range_;
  std::vector<double> data_;
};

/// GCC sets of every frame. Each channel is transformed once per frame.
std::vector<GccSet> compute_gccs(const Frames& frames, int lag_range);

struct PowerMap {
  std::size_t n_theta = 0;
  std::size_t n_phi = 0;
  std::vector<double> values;  // row-major, theta first
  bool normalized = false;
};

// Nearest-sample SRP-PHAT: P(g) = sum_n sum_m R_nm(round(delta_tau_nm(g) fs)).
// The rounded lags are precomputed; construction throws LagRangeTooSmall
// when some lag falls outside the GCC range.
class SrpMapper {
 public:
  SrpMapper(const DelayTable& delays, const SphericalGrid& grid, double fs, int lag_range);

  PowerMap map(const GccSet& gcc) const;
  int lag_range() const { return lag_range_; }

 private:
  std::size_t n_mics_;
  std::size_t n_theta_, n_phi_;
  int lag_range_;
  std::vector<std::int16_t> lags_;  // [pair n<m][grid point]
};

PowerMap srp_map(const GccSet& gcc, const DelayTable& delays,
                 const SphericalGrid& grid, double fs);

/// v - mean(v), then divided by max|v| unless the map is constant.
PowerMap normalize_map(PowerMap map);

// C x T x n_theta x n_phi, C = 3: normalized map, argmax elevation / pi,
// (argmax azimuth + pi) / 2 pi. Silent frames are zero in every channel.
struct InputTensor {
  static constexpr std::size_t kChannels = 3;
  std::size_t T = 0;
  std::size_t n_theta = 0;
  std::size_t n_phi = 0;
  std::vector<float> data;
  std::vector<bool> vad;

  float at(std::size_t c, std::size_t t, std::size_t i, std::size_t j) const {
    return data[((c * T + t) * n_theta + i) * n_phi + j];
  }
};

InputTensor assemble_input(const std::vector<PowerMap>& maps, const std::vector<bool>& vad,
                           const SphericalGrid& grid);

// Everything the trackers consume for one multichannel recording.
struct FeatureSet {
  std::vector<PowerMap> maps;      // normalized
  std::vector<GridPeak> peaks;     // argmax of each raw map
  std::vector<bool> vad;
  InputTensor input;
};

class FeatureExtractor {
 public:
  FeatureExtractor(const MicArray& array, const SphericalGrid& grid,
                   const FramingConfig& framing, double c = kDefaultSpeedOfSound);

  const SphericalGrid& grid() const { return grid_; }
  const FramingConfig& framing() const { return framing_; }
  int lag_range() const { return lag_range_; }

  FeatureSet compute(const MicSignals& sig, const std::vector<bool>& vad) const;
  FeatureSet compute(const std::vector<GccSet>& gccs, const std::vector<bool>& vad) const;

 private:
  SphericalGrid grid_;
  FramingConfig framing_;
  int lag_range_;
  SrpMapper mapper_;
};

// Per-frame GCC feature vector for the GCC baseline: for every pair n < m
// the 2 * lag_range + 1 lags, pair-major. Silent frames are zeroed.
// Output is [pair * lag][T].
std::vector<float> gcc_feature_matrix(const std::vector<GccSet>& gccs,
                                      const std::vector<bool>& vad);

// Binary feature dump: "SRPM", u32 version, u32 C, T, n_theta, n_phi, then
// row-major float32, all little-endian. A JSON sidecar at path + ".json"
// carries the grid, framing and VAD mask.
void write_feature_dump(const std::string& path, const InputTensor& input,
                        const FramingConfig& framing);
InputTensor read_feature_dump(const std::string& path);

}  // namespace doatrack
