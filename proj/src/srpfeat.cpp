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

#include "doatrack/srpfeat.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "doatrack/binio.hpp"
#include "doatrack/error.hpp"
#include "doatrack/fft.hpp"

namespace doatrack {

void FramingConfig::validate() const {
  if (K == 0 || hop == 0 || hop > K) {
    throw Error(ErrorCode::kInvalidArgument, "framing needs 0 < hop <= K");
  }
  if (!(fs > 0.0)) throw Error(ErrorCode::kInvalidArgument, "fs must be positive");
  if (window != "hann") {
    throw Error(ErrorCode::kInvalidArgument, "unsupported window '" + window + "'");
  }
}

std::size_t FramingConfig::num_frames(std::size_t len) const {
  validate();
  if (len < K) {
    throw Error(ErrorCode::kTooShort,
                "signal of " + std::to_string(len) + " samples is shorter than K");
  }
  return (len - K) / hop + 1;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return w;
}

Frames::Frames(std::size_t n_channels, std::size_t n_frames, std::size_t frame_len)
    : n_channels_(n_channels), n_frames_(n_frames), frame_len_(frame_len),
      data_(n_channels * n_frames * frame_len, 0.0) {}

Frames frame_signal(const MicSignals& sig, const FramingConfig& cfg) {
  const std::size_t T = cfg.num_frames(sig.length());
  const auto w = hann_window(cfg.K);
  Frames frames(sig.num_channels(), T, cfg.K);
  for (std::size_t ch = 0; ch < sig.num_channels(); ++ch) {
    for (std::size_t t = 0; t < T; ++t) {
      auto dst = frames.frame(ch, t);
      const double* src = sig.channels[ch].data() + t * cfg.hop;
      for (std::size_t k = 0; k < cfg.K; ++k) dst[k] = src[k] * w[k];
    }
  }
  return frames;
}

bool EnergyVad::is_speech(std::span<const double> frame) {
  double e = 0.0;
  for (double v : frame) e += v * v;
  const double rms = frame.empty() ? 0.0 : std::sqrt(e / static_cast<double>(frame.size()));
  running_max_ = std::max(running_max_, rms);
  const bool active = rms > std::max(opts_.abs_floor, opts_.rel_threshold * running_max_);
  if (active) {
    hangover_left_ = opts_.hangover_frames;
    return true;
  }
  if (hangover_left_ > 0) {
    --hangover_left_;
    return true;
  }
  return false;
}

void EnergyVad::reset() {
  running_max_ = 0.0;
  hangover_left_ = 0;
}

std::vector<bool> vad_mask(std::span<const double> signal, const FramingConfig& cfg,
                           VoiceActivityDetector& vad) {
  const std::size_t T = cfg.num_frames(signal.size());
  std::vector<bool> mask(T);
  for (std::size_t t = 0; t < T; ++t) mask[t] = vad.is_speech(signal.subspan(t * cfg.hop, cfg.K));
  return mask;
}

std::vector<bool> vad_mask(const MicSignals& sig, const FramingConfig& cfg,
                           VoiceActivityDetector& vad) {
  const std::size_t T = cfg.num_frames(sig.length());
  const double inv_ch = 1.0 / static_cast<double>(std::max<std::size_t>(1, sig.num_channels()));
  std::vector<bool> mask(T);
  std::vector<double> mix(cfg.K);
  for (std::size_t t = 0; t < T; ++t) {
    // RMS of the channel-averaged energy: sqrt(mean_ch(x^2)) per sample.
    for (std::size_t k = 0; k < cfg.K; ++k) {
      double e = 0.0;
      for (const auto& ch : sig.channels) e += ch[t * cfg.hop + k] * ch[t * cfg.hop + k];
      mix[k] = std::sqrt(e * inv_ch);
    }
    mask[t] = vad.is_speech(mix);
  }
  return mask;
}

namespace {

// Whitened cross-spectrum followed by an unnormalized inverse transform.
void phat_correlation(std::span<const std::complex<double>> xn,
                      std::span<const std::complex<double>> xm, RealFft& fft,
                      std::vector<std::complex<double>>& cross, std::vector<double>& corr) {
  double max_mag = 0.0;
  for (std::size_t k = 0; k < xn.size(); ++k) {
    cross[k] = xn[k] * std::conj(xm[k]);
    max_mag = std::max(max_mag, std::abs(cross[k]));
  }
  if (max_mag == 0.0) {
    std::fill(corr.begin(), corr.end(), 0.0);
    return;
  }
  const double eps = 1e-12 * max_mag;
  for (auto& c : cross) c /= std::max(std::abs(c), eps);
  fft.inverse(cross, corr);
}

void extract_lags(const std::vector<double>& corr, int lag_range, std::span<double> out) {
  const auto n = static_cast<long>(corr.size());
  const double scale = 1.0 / static_cast<double>(n);
  for (int tau = -lag_range; tau <= lag_range; ++tau) {
    const long idx = ((tau % n) + n) % n;
    out[static_cast<std::size_t>(tau + lag_range)] = corr[static_cast<std::size_t>(idx)] * scale;
  }
}

}  // namespace

std::vector<double> gcc_phat(std::span<const double> frame_n,
                             std::span<const double> frame_m, int lag_range) {
  if (frame_n.size() != frame_m.size() || frame_n.empty()) {
    throw Error(ErrorCode::kShapeError, "gcc_phat frames differ in length");
  }
  if (lag_range < 0 || static_cast<std::size_t>(2 * lag_range + 1) > frame_n.size()) {
    throw Error(ErrorCode::kInvalidArgument, "lag range does not fit the frame");
  }
  RealFft fft(frame_n.size());
  std::vector<std::complex<double>> xn(fft.bins()), xm(fft.bins()), cross(fft.bins());
  fft.forward(frame_n, xn);
  fft.forward(frame_m, xm);
  std::vector<double> corr(fft.size());
  phat_correlation(xn, xm, fft, cross, corr);
  std::vector<double> out(2 * static_cast<std::size_t>(lag_range) + 1);
  extract_lags(corr, lag_range, out);
  return out;
}

int lag_range_for(const MicArray& array, double fs, double c) {
  return static_cast<int>(std::ceil(array.max_distance() * fs / c));
}

GccSet::GccSet(std::size_t n_mics, int lag_range)
    : n_mics_(n_mics), lag_range_(lag_range),
      data_(n_mics * (n_mics + 1) / 2 * (2 * static_cast<std::size_t>(lag_range) + 1), 0.0) {}

std::size_t GccSet::index(std::size_t n, std::size_t m) const {
  // Row-major upper triangle including the diagonal.
  return n * n_mics_ - n * (n - 1) / 2 + (m - n);
}

std::span<double> GccSet::pair(std::size_t n, std::size_t m) {
  if (n > m || m >= n_mics_) throw Error(ErrorCode::kInvalidArgument, "GccSet::pair index");
  return {data_.data() + index(n, m) * num_lags(), num_lags()};
}

std::span<const double> GccSet::pair(std::size_t n, std::size_t m) const {
  if (n > m || m >= n_mics_) throw Error(ErrorCode::kInvalidArgument, "GccSet::pair index");
  return {data_.data() + index(n, m) * num_lags(), num_lags()};
}

double GccSet::operator()(std::size_t n, std::size_t m, int lag) const {
  if (lag < -lag_range_ || lag > lag_range_) {
    throw Error(ErrorCode::kLagRangeTooSmall, "lag outside stored GCC range");
  }
  if (n <= m) return pair(n, m)[static_cast<std::size_t>(lag + lag_range_)];
  return pair(m, n)[static_cast<std::size_t>(lag_range_ - lag)];
}

std::vector<GccSet> compute_gccs(const Frames& frames, int lag_range) {
  const std::size_t n_mics = frames.num_channels();
  const std::size_t K = frames.frame_len();
  if (lag_range < 0 || static_cast<std::size_t>(2 * lag_range + 1) > K) {
    throw Error(ErrorCode::kInvalidArgument, "lag range does not fit the frame");
  }
  RealFft fft(K);
  std::vector<std::vector<std::complex<double>>> spec(n_mics,
                                                      std::vector<std::complex<double>>(fft.bins()));
  std::vector<std::complex<double>> cross(fft.bins());
  std::vector<double> corr(K);
  std::vector<GccSet> out;
  out.reserve(frames.num_frames());
  for (std::size_t t = 0; t < frames.num_frames(); ++t) {
    for (std::size_t n = 0; n < n_mics; ++n) fft.forward(frames.frame(n, t), spec[n]);
    GccSet set(n_mics, lag_range);
    for (std::size_t n = 0; n < n_mics; ++n) {
      for (std::size_t m = n; m < n_mics; ++m) {
        phat_correlation(spec[n], spec[m], fft, cross, corr);
        auto r = set.pair(n, m);
        extract_lags(corr, lag_range, r);
        if (n == m) {
          // Autocorrelations are even; remove the inverse transform's rounding asymmetry.
          for (int l = 1; l <= lag_range; ++l) {
            const double avg = 0.5 * (r[lag_range + l] + r[lag_range - l]);
            r[lag_range + l] = r[lag_range - l] = avg;
          }
        }
      }
    }
    out.push_back(std::move(set));
  }
  return out;
}

SrpMapper::SrpMapper(const DelayTable& delays, const SphericalGrid& grid, double fs,
                     int lag_range)
    : n_mics_(delays.n_mics()), n_theta_(grid.n_theta()), n_phi_(grid.n_phi()),
      lag_range_(lag_range) {
  if (delays.n_points() != grid.size()) {
    throw Error(ErrorCode::kShapeError, "delay table does not match grid");
  }
  const std::size_t n_points = grid.size();
  const std::size_t n_pairs = n_mics_ * (n_mics_ - 1) / 2;
  lags_.resize(n_pairs * n_points);
  std::size_t p = 0;
  for (std::size_t n = 0; n < n_mics_; ++n) {
    for (std::size_t m = n + 1; m < n_mics_; ++m, ++p) {
      for (std::size_t g = 0; g < n_points; ++g) {
        const long lag = std::lround(delays(n, m, g) * fs);
        if (std::abs(lag) > lag_range) {
          throw Error(ErrorCode::kLagRangeTooSmall,
                      "steering lag " + std::to_string(lag) + " exceeds GCC lag range " +
                          std::to_string(lag_range));
        }
        lags_[p * n_points + g] = static_cast<std::int16_t>(lag);
      }
    }
  }
}

PowerMap SrpMapper::map(const GccSet& gcc) const {
  if (gcc.n_mics() != n_mics_ || gcc.lag_range() != lag_range_) {
    throw Error(ErrorCode::kShapeError, "GCC set does not match the SRP mapper");
  }
  const std::size_t n_points = n_theta_ * n_phi_;
  PowerMap out;
  out.n_theta = n_theta_;
  out.n_phi = n_phi_;
  // Autoterms R_nn(0) are direction independent.
  double autoterms = 0.0;
  for (std::size_t n = 0; n < n_mics_; ++n) autoterms += gcc.pair(n, n)[lag_range_];
  out.values.assign(n_points, autoterms);
  // R_nm(l) + R_mn(-l) = 2 R_nm(l), and round() is odd-symmetric.
  std::size_t p = 0;
  for (std::size_t n = 0; n < n_mics_; ++n) {
    for (std::size_t m = n + 1; m < n_mics_; ++m, ++p) {
      const auto r = gcc.pair(n, m);
      const std::int16_t* lag = lags_.data() + p * n_points;
      for (std::size_t g = 0; g < n_points; ++g) {
        out.values[g] += 2.0 * r[static_cast<std::size_t>(lag[g] + lag_range_)];
      }
    }
  }
  return out;
}

PowerMap srp_map(const GccSet& gcc, const DelayTable& delays, const SphericalGrid& grid,
                 double fs) {
  return SrpMapper(delays, grid, fs, gcc.lag_range()).map(gcc);
}

PowerMap normalize_map(PowerMap map) {
  if (map.values.empty()) return map;
  const double mean = std::accumulate(map.values.begin(), map.values.end(), 0.0) /
                      static_cast<double>(map.values.size());
  double peak = 0.0;
  for (auto& v : map.values) {
    v -= mean;
    peak = std::max(peak, std::abs(v));
  }
  // Constant maps: anything below rounding noise of the mean is zero.
  if (peak <= 1e-12 * std::max(1.0, std::abs(mean))) {
    std::fill(map.values.begin(), map.values.end(), 0.0);
  } else {
    for (auto& v : map.values) v /= peak;
  }
  map.normalized = true;
  return map;
}

InputTensor assemble_input(const std::vector<PowerMap>& maps, const std::vector<bool>& vad,
                           const SphericalGrid& grid) {
  if (maps.size() != vad.size()) {
    throw Error(ErrorCode::kShapeError, "maps and VAD mask differ in length");
  }
  InputTensor x;
  x.T = maps.size();
  x.n_theta = grid.n_theta();
  x.n_phi = grid.n_phi();
  x.vad = vad;
  const std::size_t plane = x.n_theta * x.n_phi;
  x.data.assign(InputTensor::kChannels * x.T * plane, 0.0f);
  for (std::size_t t = 0; t < x.T; ++t) {
    const PowerMap& m = maps[t];
    if (m.n_theta != x.n_theta || m.n_phi != x.n_phi || m.values.size() != plane) {
      throw Error(ErrorCode::kShapeError, "map resolution does not match grid");
    }
    if (!vad[t]) continue;
    const GridPeak peak = grid_argmax<double>(m.values, grid);
    const auto th = static_cast<float>(peak.doa.theta / kPi);
    const auto ph = static_cast<float>((peak.doa.phi + kPi) / (2.0 * kPi));
    float* c1 = x.data.data() + (0 * x.T + t) * plane;
    float* c2 = x.data.data() + (1 * x.T + t) * plane;
    float* c3 = x.data.data() + (2 * x.T + t) * plane;
    for (std::size_t g = 0; g < plane; ++g) {
      c1[g] = static_cast<float>(m.values[g]);
      c2[g] = th;
      c3[g] = ph;
    }
  }
  return x;
}

FeatureExtractor::FeatureExtractor(const MicArray& array, const SphericalGrid& grid,
                                   const FramingConfig& framing, double c)
    : grid_(grid), framing_(framing), lag_range_(lag_range_for(array, framing.fs, c)),
      mapper_(delay_table(array, grid, c), grid, framing.fs, lag_range_) {
  framing_.validate();
}

FeatureSet FeatureExtractor::compute(const MicSignals& sig, const std::vector<bool>& vad) const {
  return compute(compute_gccs(frame_signal(sig, framing_), lag_range_), vad);
}

FeatureSet FeatureExtractor::compute(const std::vector<GccSet>& gccs,
                                     const std::vector<bool>& vad) const {
  if (gccs.size() != vad.size()) {
    throw Error(ErrorCode::kShapeError, "GCC frames and VAD mask differ in length");
  }
  FeatureSet out;
  out.vad = vad;
  out.maps.reserve(gccs.size());
  for (const auto& g : gccs) {
    PowerMap raw = mapper_.map(g);
    out.peaks.push_back(grid_argmax<double>(raw.values, grid_));
    out.maps.push_back(normalize_map(std::move(raw)));
  }
  out.input = assemble_input(out.maps, vad, grid_);
  return out;
}

std::vector<float> gcc_feature_matrix(const std::vector<GccSet>& gccs,
                                      const std::vector<bool>& vad) {
  if (gccs.size() != vad.size()) {
    throw Error(ErrorCode::kShapeError, "GCC frames and VAD mask differ in length");
  }
  const std::size_t T = gccs.size();
  if (T == 0) return {};
  const std::size_t n_mics = gccs[0].n_mics();
  const std::size_t n_lags = gccs[0].num_lags();
  const std::size_t rows = n_mics * (n_mics - 1) / 2 * n_lags;
  std::vector<float> out(rows * T, 0.0f);
  for (std::size_t t = 0; t < T; ++t) {
    if (!vad[t]) continue;
    std::size_t row = 0;
    for (std::size_t n = 0; n < n_mics; ++n) {
      for (std::size_t m = n + 1; m < n_mics; ++m) {
        const auto r = gccs[t].pair(n, m);
        for (std::size_t l = 0; l < n_lags; ++l, ++row) {
          out[row * T + t] = static_cast<float>(r[l]);
        }
      }
    }
  }
  return out;
}

namespace {
constexpr std::uint32_t kDumpVersion = 1;
}

void write_feature_dump(const std::string& path, const InputTensor& input,
                        const FramingConfig& framing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write("SRPM", 4);
  binio::write_u32(out, kDumpVersion);
  binio::write_u32(out, InputTensor::kChannels);
  binio::write_u32(out, static_cast<std::uint32_t>(input.T));
  binio::write_u32(out, static_cast<std::uint32_t>(input.n_theta));
  binio::write_u32(out, static_cast<std::uint32_t>(input.n_phi));
  binio::write_floats(out, input.data);

  nlohmann::json side;
  side["grid"] = {{"n_theta", input.n_theta}, {"n_phi", input.n_phi},
                  {"theta_range_rad", {0.0, kPi}}, {"phi_start_rad", -kPi}};
  side["framing"] = {{"K", framing.K}, {"hop", framing.hop}, {"fs", framing.fs},
                     {"window", framing.window}};
  side["vad"] = input.vad;
  std::ofstream js(path + ".json");
  if (!js) throw Error(ErrorCode::kIoError, "cannot write " + path + ".json");
  js << side.dump(2) << "\n";
}

InputTensor read_feature_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  binio::expect_magic(in, "SRPM");
  if (binio::read_u32(in) != kDumpVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported feature dump version");
  }
  if (binio::read_u32(in) != InputTensor::kChannels) {
    throw Error(ErrorCode::kFormatError, "unexpected channel count");
  }
  InputTensor x;
  x.T = binio::read_u32(in);
  x.n_theta = binio::read_u32(in);
  x.n_phi = binio::read_u32(in);
  x.data.resize(InputTensor::kChannels * x.T * x.n_theta * x.n_phi);
  binio::read_floats(in, x.data);
  std::ifstream js(path + ".json");
  if (js) {
    try {
      nlohmann::json side;
      js >> side;
      x.vad = side.at("vad").get<std::vector<bool>>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormatError, std::string("feature sidecar: ") + e.what());
    }
  } else {
    x.vad.assign(x.T, true);
  }
  return x;
}

}  // namespace doatrack
