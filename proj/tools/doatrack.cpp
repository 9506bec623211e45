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

// doatrack command-line tool. Every subcommand prints machine-readable
// output (JSON lines or CSV) to stdout unless --out is given.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "doatrack/error.hpp"
#include "doatrack/evalcli.hpp"

using namespace doatrack;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  std::string array = std::string(DOATRACK_DATA_DIR) + "/arrays/nao_head.json";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--config", c.config, "JSON config with scene/framing/train/eval sections");
  cmd->add_option("--array", c.array, "microphone array JSON");
}

AppConfig load(const Common& c) {
  AppConfig cfg = c.config.empty() ? AppConfig{} : load_app_config(c.config);
  cfg.train.seed = c.seed;
  cfg.eval.seed = c.seed;
  return cfg;
}

std::unique_ptr<SourceProvider> make_source(const std::string& corpus) {
  if (corpus.empty()) return std::make_unique<SyntheticSourceProvider>();
  return std::make_unique<WavDirectoryProvider>(corpus);
}

ModelSpec make_spec(const std::string& model, const std::string& resolution, const MicArray& array,
                    double fs) {
  const Resolution r = parse_resolution(resolution);
  switch (parse_model_kind(model)) {
    case ModelKind::kCross3d: return ModelSpec::cross3d(r.first, r.second);
    case ModelKind::kBaselineMax: return ModelSpec::baseline_max(r.first, r.second);
    case ModelKind::kBaselineGcc: return ModelSpec::baseline_gcc(array, fs, r.first, r.second);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown model");
}

// Writes to the file when a path is given, else to stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::kIoError, "cannot write " + path);
    }
  }
  std::ostream& get() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sound source DOA tracking from SRP-PHAT power maps"};
  app.require_subcommand(1);

  Common common;
  std::string out, corpus, wav, log_path, model = "cross3d", vad = "energy";
  std::string resolution = "16x32", track_resolution = "64x128";
  std::size_t count = 1, validation = 4, trajectories = 0, threads = 0;
  std::vector<std::string> checkpoints;
  std::optional<std::string> checkpoint;

  auto* synth = app.add_subcommand("synth", "render seeded trajectories to WAV + JSON");
  add_common(synth, common);
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--count", count, "number of trajectories");
  synth->add_option("--corpus", corpus, "directory of mono WAV sources");

  auto* features = app.add_subcommand("features", "SRP-PHAT feature dump of a recording");
  add_common(features, common);
  features->add_option("--wav", wav, "multichannel WAV")->required();
  features->add_option("--resolution", resolution, "map size RxC");
  features->add_option("--vad", vad, "energy|all|sidecar");
  features->add_option("--out", out, "dump path")->required();

  auto* train_cmd = app.add_subcommand("train", "train a tracker with the two-phase curriculum");
  add_common(train_cmd, common);
  train_cmd->add_option("--model", model, "cross3d|baseline-max|baseline-gcc");
  train_cmd->add_option("--resolution", resolution, "map size RxC");
  train_cmd->add_option("--out", out, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "per-batch loss CSV");
  train_cmd->add_option("--validation", validation, "held-out trajectories");
  train_cmd->add_option("--corpus", corpus, "directory of mono WAV sources");

  auto* eval = app.add_subcommand("eval", "RMSAE over the configured T60/SNR grid");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoints, "trained model (repeatable)");
  eval->add_option("--trajectories", trajectories, "trajectories per cell");
  eval->add_option("--threads", threads, "worker threads");
  eval->add_option("--out", out, "plot data CSV");
  eval->add_option("--corpus", corpus, "directory of mono WAV sources");

  auto* track = app.add_subcommand("track", "per-frame DOA of a recording");
  add_common(track, common);
  track->add_option("--wav", wav, "multichannel WAV")->required();
  track->add_option("--checkpoint", checkpoint, "trained model; SRP-PHAT argmax if absent");
  track->add_option("--resolution", track_resolution, "argmax map size RxC");
  track->add_option("--vad", vad, "energy|all|sidecar");
  track->add_option("--out", out, "CSV path");

  auto* paramcount = app.add_subcommand("paramcount", "trainable parameter total");
  add_common(paramcount, common);
  paramcount->add_option("--model", model, "cross3d|baseline-max|baseline-gcc");
  paramcount->add_option("--resolution", resolution, "map size RxC");

  CLI11_PARSE(app, argc, argv);

  try {
    const AppConfig cfg = load(common);
    const MicArray array = MicArray::load(common.array);

    if (synth->parsed()) {
      std::filesystem::create_directories(out);
      auto source = make_source(corpus);
      for (std::size_t k = 0; k < count; ++k) {
        std::mt19937_64 rng(derive_seed(common.seed, k));
        const auto s = synthesize_trajectory_sample(cfg.scene, cfg.framing, array, *source, rng);
        const std::string path = out + "/traj_" + std::to_string(k) + ".wav";
        write_trajectory_sample(path, s, cfg.framing);
        std::cout << nlohmann::json{{"wav", path},
                                    {"frames", s.scene.vad.size()},
                                    {"t60_s", s.scene.room.t60},
                                    {"snr_db", s.scene.snr_db}}
                         .dump()
                  << '\n';
      }
    } else if (features->parsed()) {
      TrackOptions opts;
      opts.framing = cfg.framing;
      opts.vad = parse_vad_mode(vad);
      const WavData w = read_wav(wav);
      if (w.channels.size() != array.size()) throw Error(ErrorCode::kFormatError, "channel count differs from array");
      const MicSignals sig = to_signals(w);
      std::vector<bool> mask;
      if (opts.vad == VadMode::kSidecar) {
        std::ifstream in(wav + ".json");
        mask = nlohmann::json::parse(in).at("vad").get<std::vector<bool>>();
      } else {
        mask = track_vad(sig, opts);
      }
      const Resolution r = parse_resolution(resolution);
      const FeatureExtractor fx(array, SphericalGrid(r.first, r.second), cfg.framing);
      const FeatureSet f = fx.compute(sig, mask);
      write_feature_dump(out, f.input, cfg.framing);
      std::cout << nlohmann::json{{"dump", out},
                                  {"shape", {InputTensor::kChannels, f.input.T, f.input.n_theta, f.input.n_phi}},
                                  {"voiced", std::count(mask.begin(), mask.end(), true)},
                                  {"lag_range", fx.lag_range()}}
                       .dump()
                << '\n';
    } else if (train_cmd->parsed()) {
      const ModelSpec spec = make_spec(model, resolution, array, cfg.framing.fs);
      auto source = make_source(corpus);
      Tracker tracker(spec, cfg.train.seed);
      nn::Adam<float> opt(nn::parameters(tracker.net()), {cfg.train.phase1_lr});
      SceneConfig held = cfg.scene;
      held.duration = cfg.train.traj_seconds;
      std::vector<Example> val;
      const std::uint64_t val_seed = derive_seed(cfg.train.seed, 0x76616c);
      for (std::size_t k = 0; k < validation; ++k) {
        val.push_back(make_example(spec, held, cfg.framing, array, *source, val_seed, k));
      }
      Output log(log_path);
      if (!log_path.empty()) log.get() << "epoch,batch,loss,lr\n";
      const auto res = train(tracker, opt, cfg.train, cfg.scene, cfg.framing, array, *source, val,
                             [&](const TrainLogEntry& e) {
                               if (!log_path.empty()) {
                                 log.get() << e.epoch << ',' << e.batch << ',' << e.loss << ',' << e.lr << '\n';
                               } else {
                                 std::cout << nlohmann::json{{"epoch", e.epoch}, {"batch", e.batch},
                                                             {"loss", e.loss}, {"lr", e.lr}}
                                                  .dump()
                                           << '\n';
                               }
                             });
      save_checkpoint(out, tracker, res.steps, &opt, {{"train", cfg.train}, {"validation", res.validation}});
      std::cout << nlohmann::json{{"checkpoint", out},
                                  {"parameters", tracker.parameter_count()},
                                  {"steps", res.steps},
                                  {"validation", res.validation}}
                       .dump()
                << '\n';
    } else if (eval->parsed()) {
      ExperimentGrid grid = cfg.eval;
      if (trajectories) grid.trajectories_per_cell = trajectories;
      if (threads) grid.threads = threads;
      std::vector<Tracker> trackers;
      trackers.reserve(checkpoints.size());
      for (const auto& p : checkpoints) trackers.push_back(tracker_from_checkpoint(load_checkpoint(p)));
      std::vector<Tracker*> models;
      for (auto& t : trackers) models.push_back(&t);
      auto source = make_source(corpus);
      const auto results = run_grid(grid, cfg.scene, cfg.framing, array, *source, models);
      Output o(out);
      emit_plot_data(results, o.get());
    } else if (track->parsed()) {
      TrackOptions opts;
      opts.framing = cfg.framing;
      opts.vad = parse_vad_mode(vad);
      opts.srp_resolution = parse_resolution(track_resolution);
      Output o(out);
      write_track_csv(track_file(wav, array, checkpoint, opts), o.get());
    } else if (paramcount->parsed()) {
      Tracker tracker(make_spec(model, resolution, array, cfg.framing.fs), 0);
      std::cout << tracker.parameter_count() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
