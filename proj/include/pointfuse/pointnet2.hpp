#pragma once

#include <string>
#include <vector>

#include "pointfuse/autodiff.hpp"
#include "pointfuse/geometry.hpp"
#include "pointfuse/lift.hpp"
#include "pointfuse/net2d.hpp"

namespace pointfuse {

struct BackboneConfig {
  std::vector<int> centroid_counts{256, 64, 16, 8};
  std::vector<double> radii{0.1, 0.2, 0.4, 0.8};
  std::vector<int> group_sizes{32, 32, 32, 32};
  std::vector<std::vector<int>> sa_mlps{
      {16, 16, 32}, {32, 32, 64}, {64, 64, 128}, {128, 128, 256}};
  // coarsest level first: fp_mlps[0] propagates level 4 onto level 3
  std::vector<std::vector<int>> fp_mlps{
      {128, 128}, {128, 128}, {128, 64}, {64, 64, 64}};
  std::vector<int> head_channels{64};
  int num_classes = 6;
  bool use_xyz = true;  // concatenate point coordinates as features

  int levels() const { return static_cast<int>(centroid_counts.size()); }
  void validate() const;
  static BackboneConfig paper_scale_defaults();
};

enum class FusionMode { Early, Intermediate, Late, XyzOnly, XyzRgb };

FusionMode fusion_from_string(const std::string& s);
std::string to_string(FusionMode mode);
bool fusion_needs_lift(FusionMode mode);

// linear+ReLU chain shared across points
struct SharedMlp {
  std::vector<TensorPtr> weights, biases;

  static SharedMlp init(int in_dim, const std::vector<int>& channels, Rng& rng);
  TensorPtr forward(Tape* tape, TensorPtr x, bool final_relu) const;
  int out_dim() const { return weights.back()->dim(0); }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Sampling/grouping structure of one set abstraction layer. Depends only on
// the coordinates, so fusion branches over the same points can share it.
struct SaStructure {
  std::vector<int> centroid_idx;    // m
  std::vector<double> centroids;    // m x 3
  std::vector<int> group_idx;       // m * group_size, into the input points
  int group_size = 0;
};

SaStructure sa_structure(const std::vector<double>& positions,
                         int num_centroids, double radius, int group_size);

// Shared MLP over concat(relative position, member feature), max-pooled per
// group; optionally concatenates centroid coordinates onto the output.
TensorPtr sa_apply(Tape* tape, const SaStructure& st,
                   const std::vector<double>& positions,
                   const TensorPtr& features, const SharedMlp& mlp,
                   bool concat_centroid_xyz);

struct SaResult {
  SaStructure structure;
  TensorPtr features;
};
SaResult sa_forward(Tape* tape, const std::vector<double>& positions,
                    const TensorPtr& features, int num_centroids, double radius,
                    int group_size, const SharedMlp& mlp,
                    bool concat_centroid_xyz);

// 3-NN inverse-square-distance interpolation of coarse features onto fine
// points (an exact-match point takes its coarse feature), concatenated with
// skip features and passed through a shared MLP.
TensorPtr fp_forward(Tape* tape, const std::vector<double>& coarse_positions,
                     const TensorPtr& coarse_features,
                     const std::vector<double>& fine_positions,
                     const TensorPtr& skip_features, const SharedMlp& mlp);

// Full model: 2d encoder-decoder + aggregation MLP + backbone weights wired
// per fusion mode.
struct FusionModel {
  FusionMode mode = FusionMode::Early;
  BackboneConfig backbone;
  AggregatorConfig aggregator;
  Unet2dConfig net2d_cfg;

  bool has_net2d = false;
  Net2d net2d;
  bool has_agg_mlp = false;
  AggregatorMlp agg_mlp;

  std::vector<SharedMlp> sa;       // geometry (or single) encoder
  std::vector<SharedMlp> sa_img;   // second encoder, intermediate fusion only
  std::vector<SharedMlp> fp;
  SharedMlp head;

  int lifted_dim() const;  // width of the aggregated image feature

  static FusionModel init(FusionMode mode, const BackboneConfig& backbone,
                          const AggregatorConfig& aggregator,
                          const Unet2dConfig& net2d_cfg, uint64_t seed);

  ParamList parameters(bool include_2d) const;
  ParamList buffers() const;
  ParamList all_state() const;
};

// Per-point class logits [N, num_classes]. point_features carries the lifted
// features (Early/Intermediate/Late), RGB (XyzRgb) or null (XyzOnly).
TensorPtr model_forward(Tape* tape, const FusionModel& model,
                        const std::vector<double>& positions,
                        const TensorPtr& point_features);

}  // namespace pointfuse
