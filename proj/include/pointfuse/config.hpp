#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "pointfuse/autodiff.hpp"
#include "pointfuse/eval.hpp"
#include "pointfuse/lift.hpp"
#include "pointfuse/net2d.hpp"
#include "pointfuse/pointnet2.hpp"
#include "pointfuse/synth.hpp"

namespace pointfuse {

struct SynthCorpusConfig {
  uint64_t seed = 7;
  int train_scenes = 32;
  int val_scenes = 8;
  SceneSpec scene;  // per-scene template; scene.seed is derived per scene
};

struct Net2dTrainConfig {
  int epochs = 12;
  int batch_size = 8;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool flip = true;
  uint64_t seed = 0;
};

struct TrainConfig {
  int epochs = 100;
  int chunks_per_epoch = 256;
  int batch_size = 4;  // paper scale uses 6
  SgdConfig sgd{0.01, 0.9, 1e-4, {{60, 0.1}, {80, 0.1}}};
  int views_m = 3;
  int n_rgb = 512;
  uint64_t seed = 0;
  bool freeze_2d = true;
  bool class_weights = false;
  double chunk_size = 1.5;
  int n_chunk = 2048;
  int val_every = 0;  // 0 = only at the end

  void validate() const;
};

struct EvalConfig {
  double stride = 0.5;
  std::vector<double> keep_ratios{1.0, 0.5, 0.25, 0.125, 0.0625};
  uint64_t seed = 0;
};

struct ExperimentConfig {
  SynthCorpusConfig synth;
  Unet2dConfig net2d;
  Net2dTrainConfig pretrain;
  AggregatorConfig lift;
  BackboneConfig backbone;
  FusionMode fusion = FusionMode::Early;
  bool paper_scale = false;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

// Strict parse: unknown keys or wrong types are ConfigErrors naming the
// offending field path. Fields not present keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully materialized snapshot; parsing it back reproduces the config.
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// `--set section.key=value` overrides applied on top of a parsed config.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace pointfuse
