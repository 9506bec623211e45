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

// Shoebox image-source room simulation and moving-source rendering.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "doatrack/geometry.hpp"

namespace doatrack {

struct Room {
  Vec3 dims;          // Lx, Ly, Lz in meters
  double t60 = 0.0;   // seconds; 0 means anechoic
  double beta = 0.0;  // uniform wall reflection magnitude in [0, 1)

  bool contains_strictly(const Vec3& p) const;
  double volume() const { return dims.x * dims.y * dims.z; }
  double surface() const {
    return 2.0 * (dims.x * dims.y + dims.x * dims.z + dims.y * dims.z);
  }
};

struct BetaFromT60 {
  double beta = 0.0;
  double alpha = 0.0;             // clamped absorption coefficient
  bool non_physical_t60 = false;  // Sabine alpha >= 1 before clamping
};

/// Sabine inversion with uniform absorption, alpha clamped to
/// [kMinAlpha, kMaxAlpha].
BetaFromT60 beta_from_t60(const Vec3& dims, double t60);
inline constexpr double kMinAlpha = 1e-6;
inline constexpr double kMaxAlpha = 0.9999;

/// Room with beta derived from t60 (t60 == 0 gives an anechoic room).
Room make_room(const Vec3& dims, double t60);

struct Rir {
  std::vector<double> taps;
  Vec3 source_pos;
  Vec3 mic_pos;
};

// Fractional delays are rendered with this many taps of Hann-windowed sinc.
inline constexpr int kFracDelayTaps = 81;

struct RirOptions {
  double fs = 16000.0;
  double t_max = 0.5;  // seconds of response kept
  double c = kDefaultSpeedOfSound;
  // Allen-Berkley high-pass applied to reverberant responses. All images add
  // with positive sign, so without it the late lattice piles up a DC offset
  // that stretches the measured decay. 0 disables. Anechoic responses are
  // never filtered.
  double high_pass_hz = 100.0;
};

/// Largest image index per axis that can arrive within t_max.
std::array<int, 3> images_per_axis(const Room& room, double t_max, double c);
/// Size of the image lattice for the given per-axis index bounds.
std::uint64_t image_source_count(const std::array<int, 3>& n_images);

Rir simulate_rir(const Room& room, const Vec3& src, const Vec3& mic,
                 const RirOptions& opts);

/// One RIR per microphone. The image lattice is enumerated once and shared.
std::vector<Rir> simulate_rirs(const Room& room, const Vec3& src,
                               std::span<const Vec3> mics, const RirOptions& opts);

struct MicSignals {
  double fs = 16000.0;
  std::vector<std::vector<double>> channels;

  std::size_t num_channels() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels[0].size(); }
};

/// Absolute microphone positions for an array placed at origin (no rotation).
std::vector<Vec3> place_array(const MicArray& array, const Vec3& origin);

// Segment i of the dry signal spans [i * segment_len, (i + 1) * segment_len),
// except the last one which runs to the end of the signal. Each segment is
// convolved with the RIRs of points[i] and overlap-added at its offset. The
// output has the same length as the dry signal.
MicSignals render_moving_source(std::span<const double> dry,
                                std::span<const Vec3> points,
                                std::size_t segment_len,
                                std::span<const Vec3> mics, const Room& room,
                                const RirOptions& opts);

/// Full-length convolution truncated to the length of x.
std::vector<double> fft_convolve_truncated(std::span<const double> x,
                                           std::span<const double> h);

// Per-frame power bookkeeping used by the SNR rule: power is the mean sample
// energy over frames flagged active, averaged across channels.
double active_frame_power(const MicSignals& sig, const std::vector<bool>& active,
                          std::size_t frame_len, std::size_t hop);

/// White Gaussian noise at the level that gives snr_db against the active
/// frames of sig. Throws AllSilent if no frame is active.
MicSignals make_noise(const MicSignals& sig, double snr_db,
                      const std::vector<bool>& active, std::size_t frame_len,
                      std::size_t hop, std::mt19937_64& rng);

/// sig + make_noise(...). snr_db = +inf returns sig unchanged.
MicSignals add_noise(const MicSignals& sig, double snr_db,
                     const std::vector<bool>& active, std::size_t frame_len,
                     std::size_t hop, std::mt19937_64& rng);

}  // namespace doatrack
