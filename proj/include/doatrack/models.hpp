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

// The Cross3D tracker, the two 1-D CNN baselines, curriculum training and
// checkpoints.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doatrack/scenegen.hpp"
#include "doatrack/srpfeat.hpp"
#include "doatrack/tensornet.hpp"

namespace doatrack {

enum class ModelKind { kCross3d, kBaselineMax, kBaselineGcc };

std::string model_kind_name(ModelKind k);  // "cross3d", "baseline-max", "baseline-gcc"
ModelKind parse_model_kind(const std::string& s);

struct Cross3dSpec {
  std::size_t n_theta = 0;
  std::size_t n_phi = 0;
  std::size_t P = 0;  // poolings per branch

  /// Throws ShapeError unless both sizes are powers of two >= 2.
  static Cross3dSpec for_resolution(std::size_t n_theta, std::size_t n_phi);
  /// Concatenated per-frame feature width of the two branches.
  std::size_t feature_width() const;
  std::size_t receptive_field() const { return 21 + 4 * P; }
};

/// Closed-form trainable parameter count of a Cross3D network.
std::size_t cross3d_param_count(const Cross3dSpec& spec);

/// Receptive field in seconds: (frames - 1) * hop + window.
double receptive_field_seconds(std::size_t frames, const FramingConfig& framing);

struct ModelSpec {
  ModelKind kind = ModelKind::kCross3d;
  std::size_t n_theta = 0;  // feature map resolution for every kind
  std::size_t n_phi = 0;
  std::size_t input_channels = 0;  // 3 for Cross3D, 2 or pairs * lags for baselines

  static ModelSpec cross3d(std::size_t n_theta, std::size_t n_phi);
  static ModelSpec baseline_max(std::size_t n_theta, std::size_t n_phi);
  static ModelSpec baseline_gcc(const MicArray& array, double fs, std::size_t n_theta = 16,
                                std::size_t n_phi = 32);
  bool operator==(const ModelSpec&) const = default;
};

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

template <typename S>
std::unique_ptr<nn::Sequential<S>> build_cross3d(std::size_t n_theta, std::size_t n_phi);
template <typename S>
std::unique_ptr<nn::Sequential<S>> build_baseline(std::size_t input_channels);
template <typename S>
std::unique_ptr<nn::Sequential<S>> build_network(const ModelSpec& spec);

struct TrackEstimate {
  Doa doa;
  Vec3 unit;
  bool degenerate = false;
};

/// Normalizes each column of a 3 x T output; norms below 1e-8 give (0, 0, 1)
/// flagged degenerate.
std::vector<TrackEstimate> estimate_doa(const nn::Tensor<float>& out);

/// Network input for one recording. gccs is required by the GCC baseline.
nn::Tensor<float> model_input(const ModelSpec& spec, const FeatureSet& feats,
                              const std::vector<GccSet>* gccs = nullptr);

/// 3 x T unit-vector targets.
nn::Tensor<float> doa_targets(const std::vector<Doa>& gt);

class Tracker {
 public:
  Tracker(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  nn::Sequential<float>& net() { return *net_; }
  std::size_t parameter_count() { return nn::parameter_count(*net_); }
  std::size_t receptive_field() const { return net_->temporal_reach() + 1; }

  nn::Tensor<float> forward(const nn::Tensor<float>& x, bool train = false) { return net_->forward(x, train); }
  std::vector<TrackEstimate> track(const nn::Tensor<float>& x) { return estimate_doa(forward(x)); }

 private:
  ModelSpec spec_;
  std::unique_ptr<nn::Sequential<float>> net_;
};

struct TrainConfig {
  std::size_t epochs = 80;
  std::size_t trajectories_per_epoch = 585;
  double traj_seconds = 20.0;
  std::size_t phase1_epochs = 20;
  double phase1_snr = 30.0;
  std::size_t phase1_batch = 5;
  double phase1_lr = 1e-4;
  std::size_t phase2_batch = 10;
  double phase2_lr = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct CurriculumStage {
  std::array<double, 2> snr_range;
  std::size_t batch = 0;
  double lr = 0.0;
};

/// Stage of a 1-based epoch: the first phase1_epochs use the fixed SNR.
CurriculumStage curriculum_for_epoch(const TrainConfig& cfg, const SceneConfig& scene,
                                     std::size_t epoch);

// One training example prepared for a model: input tensor and targets.
struct Example {
  nn::Tensor<float> input;
  nn::Tensor<float> target;
};

/// Synthesizes trajectory sample `index` of stream `seed` and turns it into
/// a model example.
Example make_example(const ModelSpec& spec, const SceneConfig& scene,
                     const FramingConfig& framing, const MicArray& array,
                     SourceProvider& source, std::uint64_t seed, std::uint64_t index);

/// Mean loss over examples, no gradient.
double evaluate_loss(Tracker& tracker, const std::vector<Example>& examples);

/// One optimizer step on a batch; returns the batch loss before the update.
double train_step(Tracker& tracker, nn::Adam<float>& opt, const std::vector<Example>& batch);

struct TrainLogEntry {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::uint64_t steps = 0;
  std::vector<double> validation;  // before training, then after each epoch
};

// Two-phase curriculum with on-the-fly synthesis. Trajectory k of the run
// uses derive_seed(cfg.seed, k). The validation set (if any) is scored
// before training and after each epoch.
TrainResult train(Tracker& tracker, nn::Adam<float>& opt, const TrainConfig& cfg,
                  const SceneConfig& scene, const FramingConfig& framing,
                  const MicArray& array, SourceProvider& source,
                  const std::vector<Example>& validation = {},
                  const std::function<void(const TrainLogEntry&)>& on_batch = {});

struct Checkpoint {
  ModelSpec spec;
  std::uint64_t step = 0;
  std::map<std::string, nn::Tensor<float>> tensors;
  nlohmann::json extra;
};

/// "SSTC", u32 version, u32 header bytes, JSON header, float32 blobs.
void save_checkpoint(const std::string& path, Tracker& tracker, std::uint64_t step = 0,
                     nn::Adam<float>* opt = nullptr, const nlohmann::json& extra = {});
Checkpoint load_checkpoint(const std::string& path);

/// Builds a tracker from a checkpoint. Throws FormatError when the expected
/// spec (if given) or any tensor shape disagrees.
Tracker tracker_from_checkpoint(const Checkpoint& ckpt,
                                const std::optional<ModelSpec>& expected = std::nullopt);

/// Restores Adam moments saved alongside the parameters.
void restore_optimizer(const Checkpoint& ckpt, nn::Adam<float>& opt, Tracker& tracker);

}  // namespace doatrack
