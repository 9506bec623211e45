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

#include "doatrack/roomsim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include "doatrack/error.hpp"
#include "doatrack/fft.hpp"

namespace doatrack {
namespace {

constexpr int kHalfTaps = kFracDelayTaps / 2;  // 40
constexpr int kTablePhases = 512;

double windowed_sinc(double x) {
  const double half_window = kHalfTaps + 1.0;
  if (std::abs(x) >= half_window) return 0.0;
  const double w = 0.5 * (1.0 + std::cos(kPi * x / half_window));
  if (x == 0.0) return w;
  return w * std::sin(kPi * x) / (kPi * x);
}

// Row p holds the kernel for fractional offset f = -0.5 + p / kTablePhases,
// sampled at integer taps m - f for m in [-40, 40].
const std::vector<double>& kernel_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t((kTablePhases + 1) * kFracDelayTaps);
    for (int p = 0; p <= kTablePhases; ++p) {
      const double f = -0.5 + static_cast<double>(p) / kTablePhases;
      for (int m = -kHalfTaps; m <= kHalfTaps; ++m) {
        t[p * kFracDelayTaps + (m + kHalfTaps)] = windowed_sinc(m - f);
      }
    }
    return t;
  }();
  return table;
}

// Adds amp * k(n - delay) into taps for every n within the kernel support.
void add_fractional_impulse(std::vector<double>& taps, double delay, double amp) {
  const auto n0 = static_cast<long>(std::lround(delay));
  const double f = delay - static_cast<double>(n0);  // [-0.5, 0.5]
  const double pos = (f + 0.5) * kTablePhases;
  int p = static_cast<int>(pos);
  if (p >= kTablePhases) p = kTablePhases - 1;
  const double w = pos - p;
  const double* lo = kernel_table().data() + p * kFracDelayTaps;
  const double* hi = lo + kFracDelayTaps;
  const long n_taps = static_cast<long>(taps.size());
  const long first = std::max<long>(0, n0 - kHalfTaps);
  const long last = std::min<long>(n_taps - 1, n0 + kHalfTaps);
  const double a_lo = amp * (1.0 - w);
  const double a_hi = amp * w;
  double* out = taps.data();
  for (long n = first; n <= last; ++n) {
    const long m = n - n0 + kHalfTaps;
    out[n] += a_lo * lo[m] + a_hi * hi[m];
  }
}

// Second-order IIR high-pass from Allen & Berkley's image method.
void allen_berkley_high_pass(std::vector<double>& h, double cutoff_hz, double fs) {
  const double w = 2.0 * kPi * cutoff_hz / fs;
  const double r1 = std::exp(-w);
  const double b1 = 2.0 * r1 * std::cos(w);
  const double b2 = -r1 * r1;
  const double a1 = -(1.0 + r1);
  double y0 = 0.0, y1 = 0.0, y2 = 0.0;
  for (double& x : h) {
    y2 = y1;
    y1 = y0;
    y0 = b1 * y1 + b2 * y2 + x;
    x = y0 + a1 * y1 + r1 * y2;
  }
}

// Image coordinate for lattice index i on one axis for lattice index i on one axis.
inline double image_coord(int i, double x, double length) {
  return (i & 1) ? (i + 1) * length - x : x + i * length;
}

}  // namespace

bool Room::contains_strictly(const Vec3& p) const {
  return p.x > 0.0 && p.x < dims.x && p.y > 0.0 && p.y < dims.y && p.z > 0.0 &&
         p.z < dims.z;
}

BetaFromT60 beta_from_t60(const Vec3& dims, double t60) {
  if (!(t60 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "t60 must be > 0");
  const Room r{dims, t60, 0.0};
  BetaFromT60 out;
  const double alpha = 0.161 * r.volume() / (r.surface() * t60);
  out.non_physical_t60 = alpha >= 1.0;
  out.alpha = std::clamp(alpha, kMinAlpha, kMaxAlpha);
  out.beta = std::sqrt(1.0 - out.alpha);
  return out;
}

Room make_room(const Vec3& dims, double t60) {
  if (!(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "room dimensions must be positive");
  }
  if (t60 < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative t60");
  Room room{dims, t60, 0.0};
  if (t60 > 0.0) {
    room.beta = beta_from_t60(dims, t60).beta;
  }
  return room;
}

std::array<int, 3> images_per_axis(const Room& room, double t_max, double c) {
  std::array<int, 3> n{};
  for (std::size_t a = 0; a < 3; ++a) {
    n[a] = room.beta == 0.0 ? 0
                            : static_cast<int>(std::floor(c * t_max / room.dims[a])) + 1;
  }
  return n;
}

std::uint64_t image_source_count(const std::array<int, 3>& n_images) {
  std::uint64_t count = 1;
  for (int n : n_images) count *= static_cast<std::uint64_t>(2 * n + 1);
  return count;
}

std::vector<Rir> simulate_rirs(const Room& room, const Vec3& src,
                               std::span<const Vec3> mics, const RirOptions& opts) {
  if (!room.contains_strictly(src)) {
    throw Error(ErrorCode::kOutOfRoom, "source outside the room");
  }
  for (const auto& m : mics) {
    if (!room.contains_strictly(m)) {
      throw Error(ErrorCode::kOutOfRoom, "microphone outside the room");
    }
  }
  if (!(opts.t_max > 0.0) || !(opts.fs > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "t_max and fs must be positive");
  }
  const auto n_taps = static_cast<std::size_t>(std::ceil(opts.t_max * opts.fs));
  std::vector<Rir> rirs(mics.size());
  for (std::size_t k = 0; k < mics.size(); ++k) {
    rirs[k].taps.assign(n_taps, 0.0);
    rirs[k].source_pos = src;
    rirs[k].mic_pos = mics[k];
  }

  const auto n_img = images_per_axis(room, opts.t_max, opts.c);
  const int max_order = n_img[0] + n_img[1] + n_img[2];
  std::vector<double> beta_pow(max_order + 1, 1.0);
  for (int k = 1; k <= max_order; ++k) beta_pow[k] = beta_pow[k - 1] * room.beta;

  const double samples_per_meter = opts.fs / opts.c;
  const double max_delay = static_cast<double>(n_taps) + kHalfTaps;
  const double inv_4pi = 1.0 / (4.0 * kPi);

  for (int i = -n_img[0]; i <= n_img[0]; ++i) {
    const double ix = image_coord(i, src.x, room.dims.x);
    for (int j = -n_img[1]; j <= n_img[1]; ++j) {
      const double iy = image_coord(j, src.y, room.dims.y);
      for (int l = -n_img[2]; l <= n_img[2]; ++l) {
        const double amp0 = beta_pow[std::abs(i) + std::abs(j) + std::abs(l)];
        if (amp0 == 0.0) continue;
        const double iz = image_coord(l, src.z, room.dims.z);
        for (std::size_t k = 0; k < mics.size(); ++k) {
          const double dx = ix - mics[k].x;
          const double dy = iy - mics[k].y;
          const double dz = iz - mics[k].z;
          const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
          const double delay = d * samples_per_meter;
          if (delay >= max_delay) continue;
          add_fractional_impulse(rirs[k].taps, delay, amp0 * inv_4pi / std::max(d, 1e-3));
        }
      }
    }
  }
  if (room.beta > 0.0 && opts.high_pass_hz > 0.0) {
    for (auto& r : rirs) allen_berkley_high_pass(r.taps, opts.high_pass_hz, opts.fs);
  }
  return rirs;
}

Rir simulate_rir(const Room& room, const Vec3& src, const Vec3& mic,
                 const RirOptions& opts) {
  const Vec3 mics[1] = {mic};
  return std::move(simulate_rirs(room, src, mics, opts)[0]);
}

std::vector<Vec3> place_array(const MicArray& array, const Vec3& origin) {
  std::vector<Vec3> out;
  out.reserve(array.size());
  for (const auto& p : array.positions()) out.push_back(origin + p);
  return out;
}

std::vector<double> fft_convolve_truncated(std::span<const double> x,
                                           std::span<const double> h) {
  std::vector<double> y(x.size(), 0.0);
  if (x.empty() || h.empty()) return y;
  const std::size_t n = next_pow2(x.size() + h.size() - 1);
  RealFft fft(n);
  std::vector<std::complex<double>> fx(fft.bins()), fh(fft.bins());
  fft.forward(x, fx);
  fft.forward(h, fh);
  for (std::size_t k = 0; k < fx.size(); ++k) fx[k] *= fh[k];
  std::vector<double> full(n);
  fft.inverse(fx, full);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = full[t] * scale;
  return y;
}

MicSignals render_moving_source(std::span<const double> dry,
                                std::span<const Vec3> points,
                                std::size_t segment_len,
                                std::span<const Vec3> mics, const Room& room,
                                const RirOptions& opts) {
  if (points.empty() || segment_len == 0) {
    throw Error(ErrorCode::kInvalidArgument, "empty trajectory or zero segment length");
  }
  if ((points.size() - 1) * segment_len >= dry.size()) {
    throw Error(ErrorCode::kInvalidArgument, "dry signal shorter than trajectory");
  }
  for (const auto& p : points) {
    if (!room.contains_strictly(p)) {
      throw Error(ErrorCode::kOutOfRoom, "trajectory point outside the room");
    }
  }
  MicSignals out;
  out.fs = opts.fs;
  out.channels.assign(mics.size(), std::vector<double>(dry.size(), 0.0));

  const auto n_rir = static_cast<std::size_t>(std::ceil(opts.t_max * opts.fs));
  const std::size_t last_len = dry.size() - (points.size() - 1) * segment_len;
  const std::size_t max_seg = std::max(segment_len, last_len);
  const std::size_t n_fft = next_pow2(max_seg + n_rir - 1);
  RealFft fft(n_fft);
  const std::size_t bins = fft.bins();
  const double scale = 1.0 / static_cast<double>(n_fft);

  std::vector<std::vector<std::complex<double>>> rir_spec(mics.size(),
                                                          std::vector<std::complex<double>>(bins));
  std::vector<std::complex<double>> seg_spec(bins), prod(bins);
  std::vector<double> conv(n_fft);

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i == 0 || !(points[i] == points[i - 1])) {
      const auto rirs = simulate_rirs(room, points[i], mics, opts);
      for (std::size_t k = 0; k < mics.size(); ++k) fft.forward(rirs[k].taps, rir_spec[k]);
    }
    const std::size_t start = i * segment_len;
    const std::size_t len = (i + 1 == points.size()) ? last_len : segment_len;
    fft.forward(dry.subspan(start, len), seg_spec);
    const std::size_t n_out = std::min(len + n_rir - 1, dry.size() - start);
    for (std::size_t k = 0; k < mics.size(); ++k) {
      for (std::size_t b = 0; b < bins; ++b) prod[b] = seg_spec[b] * rir_spec[k][b];
      fft.inverse(prod, conv);
      double* dst = out.channels[k].data() + start;
      for (std::size_t t = 0; t < n_out; ++t) dst[t] += conv[t] * scale;
    }
  }
  return out;
}

double active_frame_power(const MicSignals& sig, const std::vector<bool>& active,
                          std::size_t frame_len, std::size_t hop) {
  double total = 0.0;
  std::size_t n_active = 0;
  for (std::size_t f = 0; f < active.size(); ++f) {
    if (!active[f]) continue;
    const std::size_t start = f * hop;
    if (start + frame_len > sig.length()) {
      throw Error(ErrorCode::kShapeError, "activity mask longer than signal");
    }
    double frame_power = 0.0;
    for (const auto& ch : sig.channels) {
      double e = 0.0;
      for (std::size_t t = start; t < start + frame_len; ++t) e += ch[t] * ch[t];
      frame_power += e / static_cast<double>(frame_len);
    }
    total += frame_power / static_cast<double>(sig.num_channels());
    ++n_active;
  }
  if (n_active == 0) throw Error(ErrorCode::kAllSilent, "no active frame");
  return total / static_cast<double>(n_active);
}

MicSignals make_noise(const MicSignals& sig, double snr_db,
                      const std::vector<bool>& active, std::size_t frame_len,
                      std::size_t hop, std::mt19937_64& rng) {
  const double p_sig = active_frame_power(sig, active, frame_len, hop);
  const double sigma = std::sqrt(p_sig * std::pow(10.0, -snr_db / 10.0));
  MicSignals noise;
  noise.fs = sig.fs;
  noise.channels.assign(sig.num_channels(), std::vector<double>(sig.length()));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& ch : noise.channels)
    for (auto& v : ch) v = sigma * normal(rng);
  return noise;
}

MicSignals add_noise(const MicSignals& sig, double snr_db,
                     const std::vector<bool>& active, std::size_t frame_len,
                     std::size_t hop, std::mt19937_64& rng) {
  if (std::isinf(snr_db) && snr_db > 0) {
    // Still enforce the active-frame precondition.
    (void)active_frame_power(sig, active, frame_len, hop);
    return sig;
  }
  MicSignals out = make_noise(sig, snr_db, active, frame_len, hop, rng);
  for (std::size_t k = 0; k < out.num_channels(); ++k)
    for (std::size_t t = 0; t < out.length(); ++t) out.channels[k][t] += sig.channels[k][t];
  return out;
}

}  // namespace doatrack
