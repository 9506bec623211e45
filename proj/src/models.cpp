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

#include "doatrack/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "doatrack/binio.hpp"
#include "doatrack/error.hpp"

namespace doatrack {

namespace {

constexpr std::size_t kChannels3d = 32;
constexpr std::size_t kFc = 128;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kMaxHeaderBytes = 64u << 20;

bool is_pow2(std::size_t n) { return n >= 2 && std::has_single_bit(n); }

}  // namespace

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kCross3d: return "cross3d";
    case ModelKind::kBaselineMax: return "baseline-max";
    case ModelKind::kBaselineGcc: return "baseline-gcc";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "cross3d") return ModelKind::kCross3d;
  if (s == "baseline-max") return ModelKind::kBaselineMax;
  if (s == "baseline-gcc") return ModelKind::kBaselineGcc;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind '" + s + "'");
}

Cross3dSpec Cross3dSpec::for_resolution(std::size_t n_theta, std::size_t n_phi) {
  if (!is_pow2(n_theta) || !is_pow2(n_phi)) {
    throw Error(ErrorCode::kShapeError, "Cross3D needs power-of-two map sizes >= 2, got " +
                                            std::to_string(n_theta) + "x" + std::to_string(n_phi));
  }
  Cross3dSpec s;
  s.n_theta = n_theta;
  s.n_phi = n_phi;
  s.P = std::min<std::size_t>(4, std::countr_zero(std::min(n_theta, n_phi)));
  return s;
}

std::size_t Cross3dSpec::feature_width() const {
  return 2 * kChannels3d * (n_theta * n_phi >> P);
}

std::size_t cross3d_param_count(const Cross3dSpec& s) {
  const std::size_t stem = 3 * 125 * kChannels3d + kChannels3d;
  const std::size_t branch = kChannels3d * kChannels3d * 45 + kChannels3d;
  const std::size_t fc = (5 * s.feature_width() + 1) * kFc;
  const std::size_t head = kFc * 5 * 3 + 3;
  const std::size_t prelu = kChannels3d * (1 + 2 * s.P) + 1;
  return stem + 2 * s.P * branch + fc + head + prelu;
}

double receptive_field_seconds(std::size_t frames, const FramingConfig& framing) {
  return static_cast<double>(frames - 1) * framing.hop_seconds() + framing.window_seconds();
}

ModelSpec ModelSpec::cross3d(std::size_t n_theta, std::size_t n_phi) {
  Cross3dSpec::for_resolution(n_theta, n_phi);
  return {ModelKind::kCross3d, n_theta, n_phi, InputTensor::kChannels};
}

ModelSpec ModelSpec::baseline_max(std::size_t n_theta, std::size_t n_phi) {
  return {ModelKind::kBaselineMax, n_theta, n_phi, 2};
}

ModelSpec ModelSpec::baseline_gcc(const MicArray& array, double fs, std::size_t n_theta,
                                  std::size_t n_phi) {
  const std::size_t lags = 2 * static_cast<std::size_t>(lag_range_for(array, fs)) + 1;
  return {ModelKind::kBaselineGcc, n_theta, n_phi, array.num_pairs() * lags};
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = {{"kind", model_kind_name(s.kind)},
       {"n_theta", s.n_theta},
       {"n_phi", s.n_phi},
       {"input_channels", s.input_channels}};
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  s.n_theta = j.at("n_theta").get<std::size_t>();
  s.n_phi = j.at("n_phi").get<std::size_t>();
  s.input_channels = j.at("input_channels").get<std::size_t>();
}

template <typename S>
std::unique_ptr<nn::Sequential<S>> build_cross3d(std::size_t n_theta, std::size_t n_phi) {
  using namespace nn;
  const Cross3dSpec spec = Cross3dSpec::for_resolution(n_theta, n_phi);
  auto net = std::make_unique<Sequential<S>>();
  net->add(std::make_unique<Conv3d<S>>("stem.conv", 3, kChannels3d, 5, 5, 5));
  net->add(std::make_unique<PRelu<S>>("stem.prelu", kChannels3d, false));

  std::vector<LayerPtr<S>> branches;
  for (const auto& [name, axis] : {std::pair{"branch_phi", 3u}, std::pair{"branch_theta", 2u}}) {
    auto b = std::make_unique<Sequential<S>>();
    for (std::size_t p = 0; p < spec.P; ++p) {
      const std::string prefix = std::string(name) + "." + std::to_string(p);
      b->add(std::make_unique<Conv3d<S>>(prefix + ".conv", kChannels3d, kChannels3d, 5, 3, 3));
      b->add(std::make_unique<PRelu<S>>(prefix + ".prelu", kChannels3d, false));
      b->add(std::make_unique<MaxPoolAxis<S>>(axis, 2));
    }
    b->add(std::make_unique<FrameFlatten<S>>());
    branches.push_back(std::move(b));
  }
  net->add(std::make_unique<ParallelConcat<S>>(std::move(branches)));
  net->add(std::make_unique<Conv1d<S>>("fc.conv", spec.feature_width(), kFc, 5, 2));
  net->add(std::make_unique<PRelu<S>>("fc.prelu", kFc, true));
  net->add(std::make_unique<Conv1d<S>>("head.conv", kFc, 3, 5, 2));
  net->add(std::make_unique<Tanh<S>>());
  return net;
}

template <typename S>
std::unique_ptr<nn::Sequential<S>> build_baseline(std::size_t input_channels) {
  using namespace nn;
  if (input_channels == 0) throw Error(ErrorCode::kShapeError, "baseline needs input channels");
  const std::size_t widths[] = {1024, 512, 512, 512, 512, 128, 3};
  auto net = std::make_unique<Sequential<S>>();
  std::size_t c_in = input_channels;
  for (std::size_t l = 0; l < 7; ++l) {
    const std::string prefix = "l" + std::to_string(l + 1);
    const std::size_t dilation = l >= 5 ? 2 : 1;
    net->add(std::make_unique<Conv1d<S>>(prefix + ".conv", c_in, widths[l], 5, dilation));
    if (l < 5) net->add(std::make_unique<PRelu<S>>(prefix + ".prelu", widths[l], false));
    if (l == 5) net->add(std::make_unique<PRelu<S>>(prefix + ".prelu", widths[l], true));
    c_in = widths[l];
  }
  net->add(std::make_unique<Tanh<S>>());
  return net;
}

template <typename S>
std::unique_ptr<nn::Sequential<S>> build_network(const ModelSpec& spec) {
  if (spec.kind == ModelKind::kCross3d) return build_cross3d<S>(spec.n_theta, spec.n_phi);
  return build_baseline<S>(spec.input_channels);
}

template std::unique_ptr<nn::Sequential<float>> build_cross3d<float>(std::size_t, std::size_t);
template std::unique_ptr<nn::Sequential<double>> build_cross3d<double>(std::size_t, std::size_t);
template std::unique_ptr<nn::Sequential<float>> build_baseline<float>(std::size_t);
template std::unique_ptr<nn::Sequential<double>> build_baseline<double>(std::size_t);
template std::unique_ptr<nn::Sequential<float>> build_network<float>(const ModelSpec&);
template std::unique_ptr<nn::Sequential<double>> build_network<double>(const ModelSpec&);

std::vector<TrackEstimate> estimate_doa(const nn::Tensor<float>& out) {
  if (out.rank() != 2 || out.dim(0) != 3) {
    throw Error(ErrorCode::kShapeError, "tracker output must be 3 x T");
  }
  const std::size_t T = out.dim(1);
  std::vector<TrackEstimate> est(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Vec3 v{out[t], out[T + t], out[2 * T + t]};
    const double n = v.norm();
    if (n < 1e-8) {
      est[t].unit = {0, 0, 1};
      est[t].doa = {0.0, 0.0};
      est[t].degenerate = true;
    } else {
      est[t].unit = v * (1.0 / n);
      est[t].doa = unit_to_doa(v);
    }
  }
  return est;
}

nn::Tensor<float> model_input(const ModelSpec& spec, const FeatureSet& feats,
                              const std::vector<GccSet>* gccs) {
  const InputTensor& in = feats.input;
  switch (spec.kind) {
    case ModelKind::kCross3d:
      if (in.n_theta != spec.n_theta || in.n_phi != spec.n_phi) {
        throw Error(ErrorCode::kShapeError, "feature resolution does not match the model");
      }
      return nn::Tensor<float>({3, in.T, in.n_theta, in.n_phi}, in.data);
    case ModelKind::kBaselineMax: {
      nn::Tensor<float> x({2, in.T});
      for (std::size_t t = 0; t < in.T; ++t) {
        x[t] = in.at(1, t, 0, 0);
        x[in.T + t] = in.at(2, t, 0, 0);
      }
      return x;
    }
    case ModelKind::kBaselineGcc: {
      if (!gccs) throw Error(ErrorCode::kInvalidArgument, "GCC baseline needs the GCC frames");
      auto m = gcc_feature_matrix(*gccs, feats.vad);
      const std::size_t T = gccs->size();
      if (m.size() != spec.input_channels * T) {
        throw Error(ErrorCode::kShapeError, "GCC feature width does not match the model");
      }
      return nn::Tensor<float>({spec.input_channels, T}, std::move(m));
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind");
}

nn::Tensor<float> doa_targets(const std::vector<Doa>& gt) {
  const std::size_t T = gt.size();
  nn::Tensor<float> y({3, T});
  for (std::size_t t = 0; t < T; ++t) {
    const Vec3 u = doa_to_unit(gt[t]);
    y[t] = static_cast<float>(u.x);
    y[T + t] = static_cast<float>(u.y);
    y[2 * T + t] = static_cast<float>(u.z);
  }
  return y;
}

Tracker::Tracker(const ModelSpec& spec, std::uint64_t seed)
    : spec_(spec), net_(build_network<float>(spec)) {
  std::mt19937_64 rng(seed);
  nn::init_parameters(*net_, rng);
}

void TrainConfig::validate() const {
  if (!epochs || !trajectories_per_epoch || !phase1_batch || !phase2_batch ||
      !(traj_seconds > 0.0) || !(phase1_lr > 0.0) || !(phase2_lr > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "training sizes and rates must be positive");
  }
  if (phase1_epochs > epochs) {
    throw Error(ErrorCode::kInvalidArgument, "phase1_epochs exceeds epochs");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"trajectories_per_epoch", c.trajectories_per_epoch},
       {"traj_seconds", c.traj_seconds},
       {"phase1_epochs", c.phase1_epochs},
       {"phase1_snr", c.phase1_snr},
       {"phase1_batch", c.phase1_batch},
       {"phase1_lr", c.phase1_lr},
       {"phase2_batch", c.phase2_batch},
       {"phase2_lr", c.phase2_lr},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.epochs = j.value("epochs", c.epochs);
  c.trajectories_per_epoch = j.value("trajectories_per_epoch", c.trajectories_per_epoch);
  c.traj_seconds = j.value("traj_seconds", c.traj_seconds);
  c.phase1_epochs = j.value("phase1_epochs", c.phase1_epochs);
  c.phase1_snr = j.value("phase1_snr", c.phase1_snr);
  c.phase1_batch = j.value("phase1_batch", c.phase1_batch);
  c.phase1_lr = j.value("phase1_lr", c.phase1_lr);
  c.phase2_batch = j.value("phase2_batch", c.phase2_batch);
  c.phase2_lr = j.value("phase2_lr", c.phase2_lr);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

CurriculumStage curriculum_for_epoch(const TrainConfig& cfg, const SceneConfig& scene,
                                     std::size_t epoch) {
  if (epoch == 0) throw Error(ErrorCode::kInvalidArgument, "epochs are 1-based");
  if (epoch <= cfg.phase1_epochs) {
    return {{cfg.phase1_snr, cfg.phase1_snr}, cfg.phase1_batch, cfg.phase1_lr};
  }
  return {scene.snr_range, cfg.phase2_batch, cfg.phase2_lr};
}

Example make_example(const ModelSpec& spec, const SceneConfig& scene,
                     const FramingConfig& framing, const MicArray& array,
                     SourceProvider& source, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(derive_seed(seed, index));
  const TrajectorySample sample = synthesize_trajectory_sample(scene, framing, array, source, rng);
  const SphericalGrid grid(spec.n_theta, spec.n_phi);
  const FeatureExtractor fx(array, grid, framing);
  const auto gccs = compute_gccs(frame_signal(sample.signals, framing), fx.lag_range());
  const FeatureSet feats = fx.compute(gccs, sample.scene.vad);
  return {model_input(spec, feats, &gccs), doa_targets(sample.scene.gt_doa)};
}

double evaluate_loss(Tracker& tracker, const std::vector<Example>& examples) {
  if (examples.empty()) throw Error(ErrorCode::kEmptySelection, "no examples to score");
  double total = 0.0;
  for (const auto& ex : examples) {
    total += nn::euclidean_loss(tracker.forward(ex.input), ex.target);
  }
  return total / static_cast<double>(examples.size());
}

double train_step(Tracker& tracker, nn::Adam<float>& opt, const std::vector<Example>& batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptySelection, "empty batch");
  nn::zero_grad(tracker.net());
  const float scale = 1.0f / static_cast<float>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    nn::Tensor<float> grad;
    total += nn::euclidean_loss(tracker.forward(ex.input, true), ex.target, &grad);
    for (auto& g : grad.vec()) g *= scale;
    tracker.net().backward(grad);
  }
  opt.step();
  return total / static_cast<double>(batch.size());
}

TrainResult train(Tracker& tracker, nn::Adam<float>& opt, const TrainConfig& cfg,
                  const SceneConfig& scene, const FramingConfig& framing,
                  const MicArray& array, SourceProvider& source,
                  const std::vector<Example>& validation,
                  const std::function<void(const TrainLogEntry&)>& on_batch) {
  cfg.validate();
  TrainResult result;
  if (!validation.empty()) result.validation.push_back(evaluate_loss(tracker, validation));
  std::uint64_t index = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const CurriculumStage stage = curriculum_for_epoch(cfg, scene, epoch);
    SceneConfig sc = scene;
    sc.snr_range = stage.snr_range;
    sc.duration = cfg.traj_seconds;
    opt.set_lr(stage.lr);
    std::size_t done = 0, batch_no = 0;
    while (done < cfg.trajectories_per_epoch) {
      const std::size_t n = std::min(stage.batch, cfg.trajectories_per_epoch - done);
      std::vector<Example> batch;
      batch.reserve(n);
      for (std::size_t k = 0; k < n; ++k) {
        batch.push_back(make_example(tracker.spec(), sc, framing, array, source, cfg.seed, index++));
      }
      const TrainLogEntry entry{epoch, ++batch_no, train_step(tracker, opt, batch), stage.lr};
      result.log.push_back(entry);
      if (on_batch) on_batch(entry);
      done += n;
    }
    if (!validation.empty()) result.validation.push_back(evaluate_loss(tracker, validation));
  }
  result.steps = opt.steps();
  return result;
}

void save_checkpoint(const std::string& path, Tracker& tracker, std::uint64_t step,
                     nn::Adam<float>* opt, const nlohmann::json& extra) {
  const auto params = nn::parameters(tracker.net());
  std::vector<std::pair<std::string, const nn::Tensor<float>*>> blobs;
  for (const auto* p : params) blobs.emplace_back(p->name, &p->value);
  std::vector<nn::Tensor<float>> moments;
  if (opt) {
    moments.reserve(2 * params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      moments.emplace_back(params[k]->value.shape(), opt->first_moments()[k]);
      moments.emplace_back(params[k]->value.shape(), opt->second_moments()[k]);
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      blobs.emplace_back("adam.m/" + params[k]->name, &moments[2 * k]);
      blobs.emplace_back("adam.v/" + params[k]->name, &moments[2 * k + 1]);
    }
  }
  nlohmann::json header;
  header["spec"] = tracker.spec();
  header["step"] = step;
  if (opt) header["adam_steps"] = opt->steps();
  if (!extra.is_null()) header["extra"] = extra;
  auto& dir = header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : blobs) {
    dir.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->size();
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write("SSTC", 4);
  binio::write_u32(out, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : blobs) binio::write_floats(out, t->vec());
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  binio::expect_magic(in, "SSTC");
  if (binio::read_u32(in) != kCheckpointVersion) {
    throw Error(ErrorCode::kFormatError, "unsupported checkpoint version");
  }
  const std::uint32_t len = binio::read_u32(in);
  if (len > kMaxHeaderBytes) throw Error(ErrorCode::kFormatError, "checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw Error(ErrorCode::kFormatError, "truncated checkpoint header");
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    ck.spec = header.at("spec").get<ModelSpec>();
    ck.step = header.at("step").get<std::uint64_t>();
    ck.extra = header.value("extra", nlohmann::json{});
    if (header.contains("adam_steps")) ck.extra["adam_steps"] = header["adam_steps"];
    std::size_t expected_offset = 0;
    for (const auto& e : header.at("tensors")) {
      nn::Tensor<float> t(e.at("shape").get<nn::Shape>());
      if (e.at("offset").get<std::size_t>() != expected_offset) {
        throw Error(ErrorCode::kFormatError, "checkpoint tensors out of order");
      }
      binio::read_floats(in, t.vec());
      expected_offset += t.size();
      ck.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, std::string("checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormatError) throw;
    throw Error(ErrorCode::kFormatError, e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kFormatError, "trailing bytes after checkpoint tensors");
  }
  return ck;
}

Tracker tracker_from_checkpoint(const Checkpoint& ckpt, const std::optional<ModelSpec>& expected) {
  if (expected && !(*expected == ckpt.spec)) {
    throw Error(ErrorCode::kFormatError, "checkpoint is for " + nlohmann::json(ckpt.spec).dump() +
                                             ", expected " + nlohmann::json(*expected).dump());
  }
  Tracker tracker(ckpt.spec, 0);
  for (auto* p : nn::parameters(tracker.net())) {
    const auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw Error(ErrorCode::kFormatError, "checkpoint lacks " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw Error(ErrorCode::kFormatError, "shape mismatch for " + p->name);
    }
    p->value = it->second;
  }
  return tracker;
}

void restore_optimizer(const Checkpoint& ckpt, nn::Adam<float>& opt, Tracker& tracker) {
  const auto params = nn::parameters(tracker.net());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto m = ckpt.tensors.find("adam.m/" + params[k]->name);
    const auto v = ckpt.tensors.find("adam.v/" + params[k]->name);
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end()) {
      throw Error(ErrorCode::kFormatError, "checkpoint has no optimizer state");
    }
    opt.first_moments()[k] = m->second.vec();
    opt.second_moments()[k] = v->second.vec();
  }
  opt.set_steps(ckpt.extra.value("adam_steps", std::uint64_t{0}));
}

}  // namespace doatrack
