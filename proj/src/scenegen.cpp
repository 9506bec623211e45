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

#include "doatrack/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doatrack/error.hpp"
#include "doatrack/wav.hpp"

namespace doatrack {

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 json_vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kFormatError, "expected a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::array<double, 2> json_range(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw Error(ErrorCode::kFormatError, "expected a [min, max] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Uniform in the open interval (0, length).
double uniform_inside(std::mt19937_64& rng, double length) {
  return uniform(rng, std::nextafter(0.0, 1.0), length);
}

Vec3 uniform_point(const Room& room, std::mt19937_64& rng) {
  Vec3 p;
  for (std::size_t a = 0; a < 3; ++a) p[a] = uniform_inside(rng, room.dims[a]);
  return p;
}

std::vector<double> blackman_lowpass(std::size_t taps, double cutoff_hz, double fs) {
  std::vector<double> h(taps);
  const double fc = cutoff_hz / fs;
  const double mid = 0.5 * static_cast<double>(taps - 1);
  double sum = 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double x = static_cast<double>(n) - mid;
    const double sinc = x == 0.0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * x) / (kPi * x);
    const double r = static_cast<double>(n) / static_cast<double>(taps - 1);
    const double w = 0.42 - 0.5 * std::cos(2.0 * kPi * r) + 0.08 * std::cos(4.0 * kPi * r);
    h[n] = sinc * w;
    sum += h[n];
  }
  for (auto& v : h) v /= sum;
  return h;
}

constexpr std::size_t kSourceFilterTaps = 257;

}  // namespace

void SceneConfig::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(room_min[a] > 0.0) || room_min[a] > room_max[a]) {
      throw Error(ErrorCode::kInvalidArgument, "room_min must be positive and <= room_max");
    }
  }
  if (snr_range[0] > snr_range[1] || t60_range[0] > t60_range[1]) {
    throw Error(ErrorCode::kInvalidArgument, "empty snr or t60 range");
  }
  if (!anechoic && !(t60_range[0] > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "t60 range must be positive");
  }
  if (!(fs > 0.0) || !(duration > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fs and duration must be positive");
  }
  if (!(wall_margin_fraction >= 0.0 && wall_margin_fraction < 0.5)) {
    throw Error(ErrorCode::kInvalidArgument, "wall_margin_fraction must be in [0, 0.5)");
  }
  if (!(rir_max_seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "rir_max_seconds must be positive");
  }
}

std::size_t SceneConfig::num_samples() const {
  return static_cast<std::size_t>(std::llround(duration * fs));
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"room_min", vec_json(c.room_min)},
       {"room_max", vec_json(c.room_max)},
       {"snr_range", c.snr_range},
       {"t60_range", c.t60_range},
       {"fs", c.fs},
       {"duration", c.duration},
       {"wall_margin_fraction", c.wall_margin_fraction},
       {"rir_max_seconds", c.rir_max_seconds},
       {"anechoic", c.anechoic},
       {"static_source", c.static_source}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  c = SceneConfig{};
  if (j.contains("room_min")) c.room_min = json_vec(j["room_min"]);
  if (j.contains("room_max")) c.room_max = json_vec(j["room_max"]);
  if (j.contains("snr_range")) c.snr_range = json_range(j["snr_range"]);
  if (j.contains("t60_range")) c.t60_range = json_range(j["t60_range"]);
  c.fs = j.value("fs", c.fs);
  c.duration = j.value("duration", c.duration);
  c.wall_margin_fraction = j.value("wall_margin_fraction", c.wall_margin_fraction);
  c.rir_max_seconds = j.value("rir_max_seconds", c.rir_max_seconds);
  c.anechoic = j.value("anechoic", c.anechoic);
  c.static_source = j.value("static_source", c.static_source);
  c.validate();
}

void to_json(nlohmann::json& j, const FramingConfig& c) {
  j = {{"K", c.K}, {"hop", c.hop}, {"fs", c.fs}, {"window", c.window}};
}

void from_json(const nlohmann::json& j, FramingConfig& c) {
  c = FramingConfig{};
  c.K = j.value("K", c.K);
  c.hop = j.value("hop", c.hop);
  c.fs = j.value("fs", c.fs);
  c.window = j.value("window", c.window);
  c.validate();
}

SceneDraw sample_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  SceneDraw d;
  Vec3 dims;
  for (std::size_t a = 0; a < 3; ++a) dims[a] = uniform(rng, cfg.room_min[a], cfg.room_max[a]);
  d.t60 = uniform(rng, cfg.t60_range[0], cfg.t60_range[1]);
  d.snr_db = uniform(rng, cfg.snr_range[0], cfg.snr_range[1]);
  const double m = cfg.wall_margin_fraction;
  d.array_origin.x = uniform(rng, m * dims.x, (1.0 - m) * dims.x);
  d.array_origin.y = uniform(rng, m * dims.y, (1.0 - m) * dims.y);
  d.array_origin.z = uniform(rng, m * dims.z, 0.5 * dims.z);
  if (cfg.anechoic) d.t60 = 0.0;
  d.room = make_room(dims, d.t60);
  return d;
}

std::vector<Vec3> trajectory_points(const Vec3& p0, const Vec3& pL, const Vec3& amp,
                                    const Vec3& omega, std::size_t L) {
  std::vector<Vec3> pts(L);
  const double denom = L > 1 ? static_cast<double>(L - 1) : 1.0;
  for (std::size_t i = 0; i < L; ++i) {
    const double fi = static_cast<double>(i);
    for (std::size_t a = 0; a < 3; ++a) {
      pts[i][a] = p0[a] + fi / denom * (pL[a] - p0[a]) + amp[a] * std::sin(omega[a] * fi);
    }
  }
  return pts;
}

double max_feasible_amplitude(double p0, double pL, double omega, double length,
                              std::size_t L) {
  double a_max = std::numeric_limits<double>::infinity();
  const double denom = L > 1 ? static_cast<double>(L - 1) : 1.0;
  for (std::size_t i = 0; i < L; ++i) {
    const double fi = static_cast<double>(i);
    const double line = p0 + fi / denom * (pL - p0);
    const double s = std::sin(omega * fi);
    if (s > 0.0) a_max = std::min(a_max, (length - line) / s);
    if (s < 0.0) a_max = std::min(a_max, line / -s);
  }
  return std::isinf(a_max) ? 0.0 : std::max(0.0, a_max);
}

Trajectory generate_trajectory(const Room& room, std::size_t L, std::mt19937_64& rng) {
  if (L < 2) throw Error(ErrorCode::kInvalidArgument, "trajectory needs at least 2 points");
  Trajectory tr;
  tr.p0 = uniform_point(room, rng);
  tr.pL = uniform_point(room, rng);
  const double omega_max = 4.0 * kPi / static_cast<double>(L - 1);
  for (std::size_t a = 0; a < 3; ++a) {
    tr.omega[a] = std::uniform_real_distribution<double>(0.0, omega_max)(rng);
    const double a_max = max_feasible_amplitude(tr.p0[a], tr.pL[a], tr.omega[a], room.dims[a], L);
    tr.amp[a] = a_max > 0.0 ? std::uniform_real_distribution<double>(0.0, a_max)(rng) : 0.0;
  }
  tr.points = trajectory_points(tr.p0, tr.pL, tr.amp, tr.omega, L);
  // Rounding can land a point on a wall when A is within an ulp of the cap.
  while (!std::all_of(tr.points.begin(), tr.points.end(),
                      [&](const Vec3& p) { return room.contains_strictly(p); })) {
    tr.amp = tr.amp * 0.5;
    tr.points = trajectory_points(tr.p0, tr.pL, tr.amp, tr.omega, L);
  }
  return tr;
}

Trajectory static_trajectory(const Room& room, std::size_t L, std::mt19937_64& rng) {
  Trajectory tr;
  tr.p0 = tr.pL = uniform_point(room, rng);
  tr.points.assign(L, tr.p0);
  return tr;
}

DrySource synthetic_source(double duration, double fs, std::mt19937_64& rng) {
  if (!(duration > 0.0) || !(fs > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "duration and fs must be positive");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration * fs));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(n + kSourceFilterTaps - 1);
  for (auto& v : noise) v = gauss(rng);
  const auto h = blackman_lowpass(kSourceFilterTaps, std::min(6000.0, 0.375 * fs), fs);
  const auto filtered = fft_convolve_truncated(noise, h);

  DrySource out;
  out.signal.assign(n, 0.0);
  std::vector<bool> active(n, false);
  const auto ramp_max = static_cast<std::size_t>(0.05 * fs);
  bool on = std::bernoulli_distribution(0.5)(rng);
  std::size_t pos = 0;
  while (pos < n) {
    const double seconds = on ? uniform(rng, 0.3, 2.0) : uniform(rng, 0.1, 1.0);
    const std::size_t len = std::min(n - pos, std::max<std::size_t>(1, std::llround(seconds * fs)));
    if (on) {
      const double gain = uniform(rng, 0.3, 1.0);
      const double fm = uniform(rng, 2.0, 6.0);
      const double ph = uniform(rng, 0.0, 2.0 * kPi);
      const std::size_t ramp = std::min(ramp_max, len / 2);
      for (std::size_t k = 0; k < len; ++k) {
        double env = gain * (0.6 + 0.4 * std::sin(2.0 * kPi * fm * static_cast<double>(k) / fs + ph));
        const std::size_t edge = std::min(k, len - 1 - k);
        if (edge < ramp) {
          const double s = std::sin(0.5 * kPi * static_cast<double>(edge + 1) / static_cast<double>(ramp + 1));
          env *= s * s;
        }
        out.signal[pos + k] = env * filtered[pos + k + kSourceFilterTaps - 1];
        active[pos + k] = true;
      }
    }
    pos += len;
    on = !on;
  }
  double peak = 0.0;
  for (double v : out.signal) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (auto& v : out.signal) v *= 0.5 / peak;
  }
  out.sample_activity = std::move(active);
  out.description = "synthetic";
  return out;
}

std::vector<bool> frame_activity(const std::vector<bool>& sample_activity,
                                 const FramingConfig& framing) {
  const std::size_t T = framing.num_frames(sample_activity.size());
  // Prefix counts make each frame query O(1).
  std::vector<std::size_t> prefix(sample_activity.size() + 1, 0);
  for (std::size_t i = 0; i < sample_activity.size(); ++i) {
    prefix[i + 1] = prefix[i] + (sample_activity[i] ? 1 : 0);
  }
  std::vector<bool> mask(T);
  for (std::size_t t = 0; t < T; ++t) {
    mask[t] = prefix[t * framing.hop + framing.K] > prefix[t * framing.hop];
  }
  return mask;
}

DrySource SyntheticSourceProvider::next(double duration, double fs, std::mt19937_64& rng) {
  return synthetic_source(duration, fs, rng);
}

WavDirectoryProvider::WavDirectoryProvider(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIoError, "not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") files_.push_back(e.path().string());
  }
  std::sort(files_.begin(), files_.end());
  if (files_.empty()) throw Error(ErrorCode::kIoError, "no WAV files in " + dir);
  for (const auto& f : files_) {
    const WavData w = read_wav(f);
    if (w.channels.size() != 1) throw Error(ErrorCode::kFormatError, f + " is not mono");
    if (fs_ == 0.0) fs_ = w.fs;
    if (static_cast<double>(w.fs) != fs_) {
      throw Error(ErrorCode::kFormatError, f + " has a different sample rate");
    }
    audio_.emplace_back(w.channels[0].begin(), w.channels[0].end());
  }
  std::size_t total = 0;
  for (const auto& a : audio_) total += a.size();
  if (total == 0) throw Error(ErrorCode::kFormatError, "WAV corpus is empty");
}

DrySource WavDirectoryProvider::next(double duration, double fs, std::mt19937_64& rng) {
  if (fs != fs_) {
    throw Error(ErrorCode::kFormatError, "corpus sample rate does not match the scene");
  }
  const auto n = static_cast<std::size_t>(std::llround(duration * fs));
  std::size_t file = std::uniform_int_distribution<std::size_t>(0, files_.size() - 1)(rng);
  while (audio_[file].empty()) file = (file + 1) % files_.size();
  std::size_t offset =
      std::uniform_int_distribution<std::size_t>(0, audio_[file].size() - 1)(rng);
  DrySource out;
  out.description = files_[file] + "@" + std::to_string(offset);
  out.signal.reserve(n);
  while (out.signal.size() < n) {
    const auto& a = audio_[file];
    const std::size_t take = std::min(a.size() - offset, n - out.signal.size());
    out.signal.insert(out.signal.end(), a.begin() + static_cast<long>(offset),
                      a.begin() + static_cast<long>(offset + take));
    offset = 0;
    file = (file + 1) % files_.size();
  }
  return out;
}

std::vector<double> vad_clean(std::span<const double> dry, const std::vector<bool>& frame_mask,
                              const FramingConfig& framing) {
  if (frame_mask.size() != framing.num_frames(dry.size())) {
    throw Error(ErrorCode::kShapeError, "VAD mask does not match the signal length");
  }
  std::vector<bool> keep(dry.size(), false);
  for (std::size_t t = 0; t < frame_mask.size(); ++t) {
    if (!frame_mask[t]) continue;
    std::fill(keep.begin() + static_cast<long>(t * framing.hop),
              keep.begin() + static_cast<long>(t * framing.hop + framing.K), true);
  }
  std::vector<double> out(dry.begin(), dry.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i]) out[i] = 0.0;
  }
  return out;
}

TrajectorySample synthesize_trajectory_sample(const SceneConfig& cfg,
                                              const FramingConfig& framing,
                                              const MicArray& array,
                                              SourceProvider& source,
                                              std::mt19937_64& rng) {
  cfg.validate();
  framing.validate();
  if (framing.fs != cfg.fs) {
    throw Error(ErrorCode::kInvalidArgument, "scene and framing sample rates differ");
  }
  const std::size_t n = cfg.num_samples();
  const std::size_t L = framing.num_frames(n);

  const SceneDraw draw = sample_scene(cfg, rng);
  const DrySource dry = source.next(cfg.duration, cfg.fs, rng);
  Trajectory tr = (cfg.static_source || L < 2) ? static_trajectory(draw.room, L, rng)
                                               : generate_trajectory(draw.room, L, rng);
  return render_scene(cfg, framing, array, draw, std::move(tr), dry, rng);
}

TrajectorySample render_scene(const SceneConfig& cfg, const FramingConfig& framing,
                              const MicArray& array, const SceneDraw& draw,
                              Trajectory trajectory, const DrySource& dry,
                              std::mt19937_64& rng) {
  const std::size_t n = cfg.num_samples();
  const std::size_t L = framing.num_frames(n);
  if (dry.signal.size() != n) {
    throw Error(ErrorCode::kShapeError, "source provider returned the wrong length");
  }
  if (trajectory.points.size() != L) {
    throw Error(ErrorCode::kShapeError, "trajectory needs one point per frame");
  }
  std::vector<bool> mask;
  if (dry.sample_activity) {
    mask = frame_activity(*dry.sample_activity, framing);
  } else {
    EnergyVad vad;
    mask = vad_mask(dry.signal, framing, vad);
  }
  const auto clean = vad_clean(dry.signal, mask, framing);

  TrajectorySample out;
  AcousticScene& sc = out.scene;
  sc.room = draw.room;
  sc.array_origin = draw.array_origin;
  sc.array_name = array.name();
  sc.snr_db = draw.snr_db;
  sc.source = dry.description;
  sc.vad = mask;
  sc.trajectory = std::move(trajectory);

  RirOptions opts;
  opts.fs = cfg.fs;
  sc.rir_seconds = draw.room.beta == 0.0 ? 0.05 : std::max(0.05, std::min(draw.t60, cfg.rir_max_seconds));
  opts.t_max = sc.rir_seconds;
  const auto mics = place_array(array, draw.array_origin);
  const MicSignals reverberant =
      render_moving_source(clean, sc.trajectory.points, framing.hop, mics, draw.room, opts);
  out.signals = add_noise(reverberant, draw.snr_db, mask, framing.K, framing.hop, rng);
  for (auto& ch : out.signals.channels) {
    for (auto& v : ch) v = static_cast<double>(static_cast<float>(v));
  }

  sc.gt_doa.reserve(L);
  sc.frame_times.reserve(L);
  for (std::size_t t = 0; t < L; ++t) {
    sc.gt_doa.push_back(unit_to_doa(sc.trajectory.points[t] - draw.array_origin));
    sc.frame_times.push_back((static_cast<double>(t * framing.hop) + 0.5 * static_cast<double>(framing.K)) /
                             framing.fs);
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

nlohmann::json scene_metadata(const AcousticScene& sc, const FramingConfig& framing) {
  nlohmann::json j;
  j["room_dims_m"] = vec_json(sc.room.dims);
  j["t60_s"] = sc.room.t60;
  j["beta"] = sc.room.beta;
  j["snr_db"] = sc.snr_db;
  j["rir_seconds"] = sc.rir_seconds;
  j["array_origin_m"] = vec_json(sc.array_origin);
  j["array"] = sc.array_name;
  j["source"] = sc.source;
  j["framing"] = framing;
  auto& tr = j["trajectory"];
  tr["p0"] = vec_json(sc.trajectory.p0);
  tr["pL"] = vec_json(sc.trajectory.pL);
  tr["amp"] = vec_json(sc.trajectory.amp);
  tr["omega"] = vec_json(sc.trajectory.omega);
  tr["points_m"] = nlohmann::json::array();
  for (const auto& p : sc.trajectory.points) tr["points_m"].push_back(vec_json(p));
  j["frame_times_s"] = sc.frame_times;
  j["gt_doa_deg"] = nlohmann::json::array();
  for (const auto& d : sc.gt_doa) {
    j["gt_doa_deg"].push_back({{"elevation", rad2deg(d.theta)}, {"azimuth", rad2deg(d.phi)}});
  }
  j["vad"] = sc.vad;
  return j;
}

void write_trajectory_sample(const std::string& wav_path, const TrajectorySample& sample,
                             const FramingConfig& framing) {
  WavData w;
  w.fs = static_cast<std::uint32_t>(std::lround(sample.signals.fs));
  for (const auto& ch : sample.signals.channels) w.channels.emplace_back(ch.begin(), ch.end());
  write_wav_float(wav_path, w);
  std::ofstream js(wav_path + ".json");
  if (!js) throw Error(ErrorCode::kIoError, "cannot write " + wav_path + ".json");
  js << scene_metadata(sample.scene, framing).dump(2) << "\n";
}

}  // namespace doatrack
