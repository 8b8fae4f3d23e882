#include "pointfuse/config.hpp"

#include <fstream>
#include <set>

#include "pointfuse/errors.hpp"

namespace pointfuse {

void TrainConfig::validate() const {
  if (epochs < 1 || chunks_per_epoch < 1 || batch_size < 1 || views_m < 1 ||
      n_rgb < 1 || n_chunk < 1)
    throw ValidationError("TrainConfig: counts must be positive");
  if (!(chunk_size > 0)) throw ValidationError("TrainConfig: chunk_size <= 0");
  sgd.validate();
}

void ExperimentConfig::validate() const {
  synth.scene.validate();
  net2d.validate();
  lift.validate();
  backbone.validate();
  train.validate();
  if (synth.train_scenes < 1 || synth.val_scenes < 0)
    throw ValidationError("synth: scene counts invalid");
  if (!(eval.stride > 0)) throw ValidationError("eval: stride must be positive");
  for (double r : eval.keep_ratios)
    if (r < 0 || r > 1)
      throw ValidationError("eval: keep ratios must lie in [0,1]");
}

namespace {

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
  throw ConfigError("config error at " + path + ": " + why);
}

class Section {
 public:
  Section(const nlohmann::json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) bad_field(path_, "expected an object");
  }

  ~Section() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      bad_field(path_ + "." + key, "wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& raw(const char* key) { return j_.at(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        bad_field(path_ + "." + it.key(), "unknown key");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_synth(const nlohmann::json& j, SynthCorpusConfig& out) {
  Section s(j, "synth");
  s.get("seed", out.seed);
  s.get("train_scenes", out.train_scenes);
  s.get("val_scenes", out.val_scenes);
  s.get("frames_per_scene", out.scene.frame_count);
  s.get("width", out.scene.width);
  s.get("height", out.scene.height);
  s.get("points_per_scene", out.scene.num_points);
  s.get("room_x", out.scene.room_x);
  s.get("room_y", out.scene.room_y);
  s.get("room_z", out.scene.room_z);
  s.get("boxes", out.scene.num_boxes);
  s.get("spheres", out.scene.num_spheres);
  s.get("twins", out.scene.num_twins);
  s.get("color_noise", out.scene.color_noise);
  s.finish();
}

void parse_net2d(const nlohmann::json& j, Unet2dConfig& out,
                 Net2dTrainConfig& pre) {
  Section s(j, "net2d");
  s.get("stage_channels", out.stage_channels);
  s.get("feature_dim", out.feature_dim);
  s.get("pretrain_epochs", pre.epochs);
  s.get("pretrain_batch_size", pre.batch_size);
  s.get("pretrain_lr", pre.lr);
  s.get("pretrain_momentum", pre.momentum);
  s.get("pretrain_weight_decay", pre.weight_decay);
  s.get("flip", pre.flip);
  s.get("pretrain_seed", pre.seed);
  s.finish();
}

void parse_lift(const nlohmann::json& j, AggregatorConfig& out) {
  Section s(j, "lift");
  s.get("k", out.k);
  s.get("mlp_channels", out.mlp_channels);
  if (s.has("pooling")) {
    std::string p;
    s.get("pooling", p);
    out.pooling = pooling_from_string(p);
  }
  s.get("use_mlp", out.use_mlp);
  s.finish();
}

void parse_backbone(const nlohmann::json& j, BackboneConfig& out,
                    FusionMode& fusion, bool& paper_scale) {
  Section s(j, "backbone");
  if (s.has("paper_scale")) {
    s.get("paper_scale", paper_scale);
    if (paper_scale) out = BackboneConfig::paper_scale_defaults();
  }
  s.get("centroid_counts", out.centroid_counts);
  s.get("radii", out.radii);
  s.get("group_sizes", out.group_sizes);
  s.get("sa_mlps", out.sa_mlps);
  s.get("fp_mlps", out.fp_mlps);
  s.get("head_channels", out.head_channels);
  s.get("use_xyz", out.use_xyz);
  if (s.has("fusion")) {
    std::string f;
    s.get("fusion", f);
    fusion = fusion_from_string(f);
  }
  s.finish();
}

void parse_train(const nlohmann::json& j, TrainConfig& out) {
  Section s(j, "train");
  s.get("epochs", out.epochs);
  s.get("chunks_per_epoch", out.chunks_per_epoch);
  s.get("batch_size", out.batch_size);
  s.get("lr", out.sgd.lr);
  s.get("momentum", out.sgd.momentum);
  s.get("weight_decay", out.sgd.weight_decay);
  if (s.has("lr_schedule")) {
    try {
      out.sgd.schedule =
          s.raw("lr_schedule").get<std::vector<std::pair<int, double>>>();
    } catch (const nlohmann::json::exception&) {
      bad_field("train.lr_schedule", "expected [[epoch, multiplier], ...]");
    }
  }
  s.get("views_m", out.views_m);
  s.get("n_rgb", out.n_rgb);
  s.get("seed", out.seed);
  s.get("freeze_2d", out.freeze_2d);
  s.get("class_weights", out.class_weights);
  s.get("chunk_size", out.chunk_size);
  s.get("n_chunk", out.n_chunk);
  s.get("val_every", out.val_every);
  s.finish();
}

void parse_eval(const nlohmann::json& j, EvalConfig& out) {
  Section s(j, "eval");
  s.get("stride", out.stride);
  s.get("keep_ratios", out.keep_ratios);
  s.get("seed", out.seed);
  s.finish();
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config error at <root>: not an object");
  ExperimentConfig cfg;
  static const std::set<std::string> sections = {
      "synth", "net2d", "lift", "backbone", "train", "eval"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!sections.count(it.key()))
      throw ConfigError("config error at " + it.key() + ": unknown section");
  if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
  if (j.contains("net2d")) parse_net2d(j.at("net2d"), cfg.net2d, cfg.pretrain);
  if (j.contains("lift")) parse_lift(j.at("lift"), cfg.lift);
  if (j.contains("backbone"))
    parse_backbone(j.at("backbone"), cfg.backbone, cfg.fusion, cfg.paper_scale);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);

  // image geometry and class count follow the corpus settings
  cfg.net2d.width = cfg.synth.scene.width;
  cfg.net2d.height = cfg.synth.scene.height;
  cfg.net2d.num_classes = kNumSynthClasses;
  cfg.backbone.num_classes = kNumSynthClasses;
  if (cfg.paper_scale && !j.contains("train")) cfg.train.batch_size = 6;
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return config_from_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["synth"] = {{"seed", cfg.synth.seed},
                {"train_scenes", cfg.synth.train_scenes},
                {"val_scenes", cfg.synth.val_scenes},
                {"frames_per_scene", cfg.synth.scene.frame_count},
                {"width", cfg.synth.scene.width},
                {"height", cfg.synth.scene.height},
                {"points_per_scene", cfg.synth.scene.num_points},
                {"room_x", cfg.synth.scene.room_x},
                {"room_y", cfg.synth.scene.room_y},
                {"room_z", cfg.synth.scene.room_z},
                {"boxes", cfg.synth.scene.num_boxes},
                {"spheres", cfg.synth.scene.num_spheres},
                {"twins", cfg.synth.scene.num_twins},
                {"color_noise", cfg.synth.scene.color_noise}};
  j["net2d"] = {{"stage_channels", cfg.net2d.stage_channels},
                {"feature_dim", cfg.net2d.feature_dim},
                {"pretrain_epochs", cfg.pretrain.epochs},
                {"pretrain_batch_size", cfg.pretrain.batch_size},
                {"pretrain_lr", cfg.pretrain.lr},
                {"pretrain_momentum", cfg.pretrain.momentum},
                {"pretrain_weight_decay", cfg.pretrain.weight_decay},
                {"flip", cfg.pretrain.flip},
                {"pretrain_seed", cfg.pretrain.seed}};
  j["lift"] = {{"k", cfg.lift.k},
               {"mlp_channels", cfg.lift.mlp_channels},
               {"pooling", to_string(cfg.lift.pooling)},
               {"use_mlp", cfg.lift.use_mlp}};
  j["backbone"] = {{"paper_scale", cfg.paper_scale},
                   {"centroid_counts", cfg.backbone.centroid_counts},
                   {"radii", cfg.backbone.radii},
                   {"group_sizes", cfg.backbone.group_sizes},
                   {"sa_mlps", cfg.backbone.sa_mlps},
                   {"fp_mlps", cfg.backbone.fp_mlps},
                   {"head_channels", cfg.backbone.head_channels},
                   {"use_xyz", cfg.backbone.use_xyz},
                   {"fusion", to_string(cfg.fusion)}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"chunks_per_epoch", cfg.train.chunks_per_epoch},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.sgd.lr},
                {"momentum", cfg.train.sgd.momentum},
                {"weight_decay", cfg.train.sgd.weight_decay},
                {"lr_schedule", cfg.train.sgd.schedule},
                {"views_m", cfg.train.views_m},
                {"n_rgb", cfg.train.n_rgb},
                {"seed", cfg.train.seed},
                {"freeze_2d", cfg.train.freeze_2d},
                {"class_weights", cfg.train.class_weights},
                {"chunk_size", cfg.train.chunk_size},
                {"n_chunk", cfg.train.n_chunk},
                {"val_every", cfg.train.val_every}};
  j["eval"] = {{"stride", cfg.eval.stride},
               {"keep_ratios", cfg.eval.keep_ratios},
               {"seed", cfg.eval.seed}};
  return j;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const size_t dot = key.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == key.size())
    throw ConfigError("override key '" + key + "' must be section.field");
  const std::string section = key.substr(0, dot);
  const std::string field = key.substr(dot + 1);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // bare strings stay strings
  }
  j[section][field] = parsed;
}

}  // namespace pointfuse
