#pragma once

#include <array>
#include <vector>

#include "pointfuse/autodiff.hpp"
#include "pointfuse/geometry.hpp"

namespace pointfuse {

enum class Pooling { Sum, Max, Mean };

Pooling pooling_from_string(const std::string& s);
std::string to_string(Pooling p);

struct AggregatorConfig {
  int k = 3;
  std::vector<int> mlp_channels{128, 64};
  Pooling pooling = Pooling::Sum;
  bool use_mlp = true;

  void validate() const;
  // width of the distilled feature given the dense features' width
  int output_dim(int dense_feature_dim) const;
};

// Two-layer (by default) shared MLP on concat(neighbor feature, distance
// feature). Plain linear+ReLU, final layer linear.
struct AggregatorMlp {
  std::vector<TensorPtr> weights;  // [Cout,Cin] per layer
  std::vector<TensorPtr> biases;

  static AggregatorMlp init(const AggregatorConfig& cfg, int in_dim, Rng& rng);
  TensorPtr forward(Tape* tape, TensorPtr x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// concat(xi - xj, |xi - xj|^2)
std::array<double, 4> distance_feature(const Vec3& xi, const Vec3& xj);

// Distills one feature per sparse point from its k nearest dense neighbors:
// pool_j MLP(concat[f_j, f_dist(x_i, x_j)]). Differentiable w.r.t. the dense
// features and the MLP weights; positions are constants.
// dense_features is [N_dense, C] and must be row-aligned with dense.
TensorPtr aggregate(Tape* tape, const PointCloud& sparse,
                    const PointCloud& dense, const TensorPtr& dense_features,
                    const AggregatorConfig& cfg, const AggregatorMlp* mlp);

// Convenience overload reading constant features from the dense cloud.
TensorPtr aggregate(Tape* tape, const PointCloud& sparse,
                    const PointCloud& dense, const AggregatorConfig& cfg,
                    const AggregatorMlp* mlp);

struct AugmentedPointCloud {
  PointCloud base;    // sparse positions (+labels)
  TensorPtr lifted;   // [N, C_out]
};

// The concatenation of per-view unprojected feature clouds. feature_maps are
// [C,H,W], one per frame; n_rgb caps the unprojected pixels per frame.
struct DenseCloud {
  PointCloud cloud;    // positions only
  TensorPtr features;  // [N, C], tape-connected to the feature maps
};
DenseCloud build_dense(Tape* tape, const std::vector<const RgbdFrame*>& frames,
                       const std::vector<TensorPtr>& feature_maps, int n_rgb,
                       Rng& rng);

}  // namespace pointfuse
