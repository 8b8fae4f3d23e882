#include "pointfuse/lift.hpp"

#include <cmath>

#include "pointfuse/errors.hpp"

namespace pointfuse {

Pooling pooling_from_string(const std::string& s) {
  if (s == "sum") return Pooling::Sum;
  if (s == "max") return Pooling::Max;
  if (s == "mean") return Pooling::Mean;
  throw ConfigError("unknown pooling '" + s + "'");
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::Sum: return "sum";
    case Pooling::Max: return "max";
    case Pooling::Mean: return "mean";
  }
  return "?";
}

void AggregatorConfig::validate() const {
  if (k < 1) throw ValidationError("AggregatorConfig: k must be >= 1");
  for (int c : mlp_channels)
    if (c < 1) throw ValidationError("AggregatorConfig: channels must be positive");
  if (use_mlp && mlp_channels.empty())
    throw ValidationError("AggregatorConfig: MLP enabled but no channels");
}

int AggregatorConfig::output_dim(int dense_feature_dim) const {
  return use_mlp ? mlp_channels.back() : dense_feature_dim + 4;
}

AggregatorMlp AggregatorMlp::init(const AggregatorConfig& cfg, int in_dim,
                                  Rng& rng) {
  AggregatorMlp mlp;
  int cin = in_dim;
  for (int cout : cfg.mlp_channels) {
    auto w = make_tensor({cout, cin});
    const double bound = std::sqrt(6.0 / cin);
    for (double& v : w->data) v = rng.uniform(-bound, bound);
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(make_tensor({cout}));
    cin = cout;
  }
  return mlp;
}

TensorPtr AggregatorMlp::forward(Tape* tape, TensorPtr x) const {
  for (size_t l = 0; l < weights.size(); ++l) {
    x = linear(tape, x, weights[l], biases[l]);
    if (l + 1 < weights.size()) x = relu(tape, x);
  }
  return x;
}

void AggregatorMlp::collect(const std::string& prefix, ParamList& out) const {
  for (size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(prefix + ".l" + std::to_string(l) + ".w", weights[l]);
    out.emplace_back(prefix + ".l" + std::to_string(l) + ".b", biases[l]);
  }
}

std::array<double, 4> distance_feature(const Vec3& xi, const Vec3& xj) {
  const Vec3 d = xi - xj;
  return {d.x, d.y, d.z, d.norm2()};
}

TensorPtr aggregate(Tape* tape, const PointCloud& sparse,
                    const PointCloud& dense, const TensorPtr& dense_features,
                    const AggregatorConfig& cfg, const AggregatorMlp* mlp) {
  cfg.validate();
  if (!dense_features)
    throw ValidationError("aggregate: dense features are required");
  if (dense_features->rank() != 2 ||
      static_cast<size_t>(dense_features->dim(0)) != dense.size())
    throw ShapeError("aggregate: dense features must be [N_dense, C]");
  if (dense.size() < static_cast<size_t>(cfg.k))
    throw SizeError("aggregate: dense cloud smaller than k");
  if (cfg.use_mlp && !mlp)
    throw ValidationError("aggregate: MLP weights missing");

  const int ns = static_cast<int>(sparse.size());
  const int k = cfg.k;
  std::vector<int> idx;
  std::vector<double> d2;
  knn(sparse.positions, dense, k, idx, d2);

  // neighbor features and constant distance features, one row per (i, j)
  TensorPtr gathered = gather_rows(tape, dense_features, idx);
  auto dist = make_tensor({ns * k, 4});
  for (int i = 0; i < ns; ++i) {
    const Vec3 xi = sparse.point(static_cast<size_t>(i));
    for (int j = 0; j < k; ++j) {
      const Vec3 xj =
          dense.point(static_cast<size_t>(idx[static_cast<size_t>(i * k + j)]));
      const auto f = distance_feature(xi, xj);
      double* row = dist->data.data() + static_cast<size_t>(i * k + j) * 4;
      for (int c = 0; c < 4; ++c) row[c] = f[static_cast<size_t>(c)];
    }
  }
  TensorPtr per_neighbor = concat(tape, {gathered, dist});
  if (cfg.use_mlp) per_neighbor = mlp->forward(tape, per_neighbor);

  const int cout = per_neighbor->dim(1);
  TensorPtr grouped = reshape(tape, per_neighbor, {ns, k, cout});
  switch (cfg.pooling) {
    case Pooling::Sum: return reduce_sum_groups(tape, grouped);
    case Pooling::Max: return reduce_max_groups(tape, grouped);
    case Pooling::Mean: return reduce_mean_groups(tape, grouped);
  }
  throw ValidationError("aggregate: unknown pooling");
}

TensorPtr aggregate(Tape* tape, const PointCloud& sparse,
                    const PointCloud& dense, const AggregatorConfig& cfg,
                    const AggregatorMlp* mlp) {
  if (!dense.has_features())
    throw ValidationError("aggregate: dense cloud has no features");
  auto feats = make_tensor(
      {static_cast<int>(dense.size()), dense.feature_dim}, dense.features);
  return aggregate(tape, sparse, dense, feats, cfg, mlp);
}

DenseCloud build_dense(Tape* tape, const std::vector<const RgbdFrame*>& frames,
                       const std::vector<TensorPtr>& feature_maps, int n_rgb,
                       Rng& rng) {
  if (frames.size() != feature_maps.size())
    throw ShapeError("build_dense: one feature map per frame required");
  if (frames.empty()) throw ValidationError("build_dense: no frames");

  DenseCloud out;
  std::vector<TensorPtr> feats;
  for (size_t f = 0; f < frames.size(); ++f) {
    const RgbdFrame& frame = *frames[f];
    const TensorPtr& fm = feature_maps[f];
    if (fm->rank() != 3 || fm->dim(1) != frame.height() ||
        fm->dim(2) != frame.width())
      throw ShapeError("build_dense: feature map must be [C,H,W] of the frame");
    std::vector<int> pixels;
    PointCloud cloud = unproject(frame, n_rgb, rng, nullptr, 0, &pixels);
    if (cloud.size() == 0) continue;  // fully invalid frames contribute nothing
    out.cloud.positions.insert(out.cloud.positions.end(),
                               cloud.positions.begin(), cloud.positions.end());
    feats.push_back(gather_rows(tape, chw_to_rows(tape, fm), pixels));
  }
  if (feats.empty())
    throw ValidationError("build_dense: all frames unprojected to nothing");
  out.features = feats.size() == 1 ? feats[0] : concat_rows(tape, feats);
  return out;
}

}  // namespace pointfuse
