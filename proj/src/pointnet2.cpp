#include "pointfuse/pointnet2.hpp"

#include <algorithm>
#include <cmath>

#include "pointfuse/errors.hpp"

namespace pointfuse {

void BackboneConfig::validate() const {
  const size_t L = centroid_counts.size();
  if (L == 0) throw ValidationError("BackboneConfig: no layers");
  if (radii.size() != L || group_sizes.size() != L || sa_mlps.size() != L ||
      fp_mlps.size() != L)
    throw ValidationError("BackboneConfig: per-layer lists must align");
  for (size_t i = 1; i < L; ++i)
    if (centroid_counts[i] >= centroid_counts[i - 1])
      throw ValidationError(
          "BackboneConfig: centroid counts must be strictly decreasing");
  for (double r : radii)
    if (!(r > 0)) throw ValidationError("BackboneConfig: radii must be positive");
  for (int g : group_sizes)
    if (g < 1) throw ValidationError("BackboneConfig: group sizes must be >= 1");
  if (num_classes < 2)
    throw ValidationError("BackboneConfig: need at least two classes");
}

BackboneConfig BackboneConfig::paper_scale_defaults() {
  BackboneConfig cfg;
  cfg.centroid_counts = {1024, 256, 64, 16};
  cfg.radii = {0.1, 0.2, 0.4, 0.8};
  cfg.group_sizes = {32, 32, 32, 32};
  cfg.sa_mlps = {{32, 32, 64}, {64, 64, 128}, {128, 128, 256}, {256, 256, 512}};
  cfg.fp_mlps = {{256, 256}, {256, 256}, {256, 128}, {128, 128, 128}};
  cfg.head_channels = {128};
  return cfg;
}

FusionMode fusion_from_string(const std::string& s) {
  if (s == "early") return FusionMode::Early;
  if (s == "intermediate") return FusionMode::Intermediate;
  if (s == "late") return FusionMode::Late;
  if (s == "xyz") return FusionMode::XyzOnly;
  if (s == "xyzrgb") return FusionMode::XyzRgb;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Early: return "early";
    case FusionMode::Intermediate: return "intermediate";
    case FusionMode::Late: return "late";
    case FusionMode::XyzOnly: return "xyz";
    case FusionMode::XyzRgb: return "xyzrgb";
  }
  return "?";
}

bool fusion_needs_lift(FusionMode mode) {
  return mode == FusionMode::Early || mode == FusionMode::Intermediate ||
         mode == FusionMode::Late;
}

SharedMlp SharedMlp::init(int in_dim, const std::vector<int>& channels,
                          Rng& rng) {
  SharedMlp mlp;
  int cin = in_dim;
  for (int cout : channels) {
    auto w = make_tensor({cout, cin});
    const double bound = std::sqrt(6.0 / cin);
    for (double& v : w->data) v = rng.uniform(-bound, bound);
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(make_tensor({cout}));
    cin = cout;
  }
  return mlp;
}

TensorPtr SharedMlp::forward(Tape* tape, TensorPtr x, bool final_relu) const {
  for (size_t l = 0; l < weights.size(); ++l) {
    x = linear(tape, x, weights[l], biases[l]);
    if (final_relu || l + 1 < weights.size()) x = relu(tape, x);
  }
  return x;
}

void SharedMlp::collect(const std::string& prefix, ParamList& out) const {
  for (size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(prefix + ".l" + std::to_string(l) + ".w", weights[l]);
    out.emplace_back(prefix + ".l" + std::to_string(l) + ".b", biases[l]);
  }
}

namespace {

// permutation-invariant deterministic sampling start
int lexicographic_min_index(const std::vector<double>& positions) {
  const size_t n = positions.size() / 3;
  int best = 0;
  for (size_t i = 1; i < n; ++i) {
    const double* p = positions.data() + 3 * i;
    const double* q = positions.data() + 3 * static_cast<size_t>(best);
    if (p[0] != q[0] ? p[0] < q[0]
                     : (p[1] != q[1] ? p[1] < q[1] : p[2] < q[2]))
      best = static_cast<int>(i);
  }
  return best;
}

TensorPtr positions_tensor(const std::vector<double>& positions) {
  return make_tensor({static_cast<int>(positions.size() / 3), 3},
                     positions);
}

}  // namespace

SaStructure sa_structure(const std::vector<double>& positions,
                         int num_centroids, double radius, int group_size) {
  PointCloud cloud;
  cloud.positions = positions;
  if (cloud.size() < static_cast<size_t>(num_centroids))
    throw SizeError("sa_structure: fewer points than centroids");
  SaStructure st;
  st.group_size = group_size;
  st.centroid_idx = farthest_point_sampling(
      cloud, num_centroids, lexicographic_min_index(positions));
  st.centroids.reserve(static_cast<size_t>(num_centroids) * 3);
  for (int ci : st.centroid_idx) {
    const Vec3 p = cloud.point(static_cast<size_t>(ci));
    st.centroids.insert(st.centroids.end(), {p.x, p.y, p.z});
  }
  st.group_idx = ball_query(st.centroids, cloud, radius, group_size);
  return st;
}

TensorPtr sa_apply(Tape* tape, const SaStructure& st,
                   const std::vector<double>& positions,
                   const TensorPtr& features, const SharedMlp& mlp,
                   bool concat_centroid_xyz) {
  const int m = static_cast<int>(st.centroid_idx.size());
  const int s = st.group_size;

  // relative positions are constants: gradients do not flow into geometry
  auto relpos = make_tensor({m * s, 3});
  for (int g = 0; g < m; ++g) {
    const double* c = st.centroids.data() + 3 * static_cast<size_t>(g);
    for (int j = 0; j < s; ++j) {
      const int pi = st.group_idx[static_cast<size_t>(g * s + j)];
      const double* p = positions.data() + 3 * static_cast<size_t>(pi);
      double* row = relpos->data.data() + static_cast<size_t>(g * s + j) * 3;
      row[0] = p[0] - c[0];
      row[1] = p[1] - c[1];
      row[2] = p[2] - c[2];
    }
  }
  TensorPtr group_in = relpos;
  if (features) {
    TensorPtr gathered = gather_rows(tape, features, st.group_idx);
    group_in = concat(tape, {relpos, gathered});
  }
  TensorPtr out = mlp.forward(tape, group_in, /*final_relu=*/true);
  out = reduce_max_groups(tape, reshape(tape, out, {m, s, out->dim(1)}));
  if (concat_centroid_xyz)
    out = concat(tape, {out, positions_tensor(st.centroids)});
  return out;
}

SaResult sa_forward(Tape* tape, const std::vector<double>& positions,
                    const TensorPtr& features, int num_centroids, double radius,
                    int group_size, const SharedMlp& mlp,
                    bool concat_centroid_xyz) {
  SaResult res;
  res.structure = sa_structure(positions, num_centroids, radius, group_size);
  res.features = sa_apply(tape, res.structure, positions, features, mlp,
                          concat_centroid_xyz);
  return res;
}

TensorPtr fp_forward(Tape* tape, const std::vector<double>& coarse_positions,
                     const TensorPtr& coarse_features,
                     const std::vector<double>& fine_positions,
                     const TensorPtr& skip_features, const SharedMlp& mlp) {
  PointCloud coarse;
  coarse.positions = coarse_positions;
  if (coarse.size() < 3)
    throw SizeError("fp_forward: need at least 3 coarse points");
  const int nf = static_cast<int>(fine_positions.size() / 3);

  std::vector<int> idx;
  std::vector<double> d2;
  knn(fine_positions, coarse, 3, idx, d2);

  std::vector<double> weights(static_cast<size_t>(nf) * 3);
  for (int i = 0; i < nf; ++i) {
    const double* d = d2.data() + static_cast<size_t>(i) * 3;
    double* w = weights.data() + static_cast<size_t>(i) * 3;
    if (d[0] == 0.0) {
      // coincident point: take the coarse feature outright
      w[0] = 1;
      w[1] = 0;
      w[2] = 0;
    } else {
      const double i0 = 1.0 / d[0], i1 = 1.0 / d[1], i2 = 1.0 / d[2];
      const double sum = i0 + i1 + i2;
      w[0] = i0 / sum;
      w[1] = i1 / sum;
      w[2] = i2 / sum;
    }
  }
  TensorPtr gathered = gather_rows(tape, coarse_features, idx);
  gathered = scale_rows(tape, gathered, weights);
  TensorPtr interp = reduce_sum_groups(
      tape, reshape(tape, gathered, {nf, 3, coarse_features->dim(1)}));
  if (skip_features) interp = concat(tape, {interp, skip_features});
  return mlp.forward(tape, interp, /*final_relu=*/true);
}

// ---- FusionModel ------------------------------------------------------------

int FusionModel::lifted_dim() const {
  return aggregator.output_dim(net2d_cfg.feature_dim);
}

FusionModel FusionModel::init(FusionMode mode, const BackboneConfig& backbone,
                              const AggregatorConfig& aggregator,
                              const Unet2dConfig& net2d_cfg, uint64_t seed) {
  backbone.validate();
  aggregator.validate();
  FusionModel model;
  model.mode = mode;
  model.backbone = backbone;
  model.aggregator = aggregator;
  model.net2d_cfg = net2d_cfg;

  if (fusion_needs_lift(mode)) {
    Rng rng2d(mix_seed(seed, 0x6e323264ULL));
    model.net2d = Net2d::init(net2d_cfg, rng2d);
    model.has_net2d = true;
    if (aggregator.use_mlp) {
      Rng rng_agg(mix_seed(seed, 0x616767ULL));
      model.agg_mlp = AggregatorMlp::init(
          aggregator, net2d_cfg.feature_dim + 4, rng_agg);
      model.has_agg_mlp = true;
    }
  }

  const bool xyz = backbone.use_xyz;
  const int lift_dim = fusion_needs_lift(mode) ? model.lifted_dim() : 0;
  const int L = backbone.levels();

  // level-0 feature widths per encoder branch
  int geo_in = 0;
  switch (mode) {
    case FusionMode::Early: geo_in = lift_dim + (xyz ? 3 : 0); break;
    case FusionMode::XyzOnly: geo_in = xyz ? 3 : 0; break;
    case FusionMode::XyzRgb: geo_in = 3 + (xyz ? 3 : 0); break;
    case FusionMode::Late: geo_in = xyz ? 3 : 0; break;
    case FusionMode::Intermediate: geo_in = xyz ? 3 : 0; break;
  }

  Rng rng(mix_seed(seed, 0x626220331ULL));
  std::vector<int> geo_dims(static_cast<size_t>(L) + 1);
  geo_dims[0] = geo_in;
  for (int l = 0; l < L; ++l) {
    const auto& ch = backbone.sa_mlps[static_cast<size_t>(l)];
    model.sa.push_back(SharedMlp::init(3 + geo_dims[static_cast<size_t>(l)],
                                       ch, rng));
    geo_dims[static_cast<size_t>(l) + 1] = ch.back() + (xyz ? 3 : 0);
  }

  std::vector<int> img_dims;
  if (mode == FusionMode::Intermediate) {
    img_dims.assign(static_cast<size_t>(L) + 1, 0);
    img_dims[0] = lift_dim;
    for (int l = 0; l < L; ++l) {
      const auto& ch = backbone.sa_mlps[static_cast<size_t>(l)];
      model.sa_img.push_back(
          SharedMlp::init(3 + img_dims[static_cast<size_t>(l)], ch, rng));
      // the image branch carries pure image features; xyz lives in the
      // geometry branch
      img_dims[static_cast<size_t>(l) + 1] = ch.back();
    }
  }

  // decoder; fp[0] maps level L onto level L-1
  int carry = geo_dims[static_cast<size_t>(L)] +
              (mode == FusionMode::Intermediate
                   ? img_dims[static_cast<size_t>(L)]
                   : 0);
  for (int f = 0; f < L; ++f) {
    const int fine_level = L - 1 - f;
    int skip = geo_dims[static_cast<size_t>(fine_level)];
    if (mode == FusionMode::Intermediate)
      skip += img_dims[static_cast<size_t>(fine_level)];
    const auto& ch = backbone.fp_mlps[static_cast<size_t>(f)];
    model.fp.push_back(SharedMlp::init(carry + skip, ch, rng));
    carry = ch.back();
  }

  int head_in = carry + (mode == FusionMode::Late ? lift_dim : 0);
  std::vector<int> head_ch = backbone.head_channels;
  head_ch.push_back(backbone.num_classes);
  model.head = SharedMlp::init(head_in, head_ch, rng);
  return model;
}

ParamList FusionModel::parameters(bool include_2d) const {
  ParamList out;
  if (include_2d && has_net2d) net2d.collect_params(out);
  if (has_agg_mlp) agg_mlp.collect("agg", out);
  for (size_t l = 0; l < sa.size(); ++l)
    sa[l].collect("sa" + std::to_string(l), out);
  for (size_t l = 0; l < sa_img.size(); ++l)
    sa_img[l].collect("sa_img" + std::to_string(l), out);
  for (size_t l = 0; l < fp.size(); ++l)
    fp[l].collect("fp" + std::to_string(l), out);
  head.collect("head", out);
  return out;
}

ParamList FusionModel::buffers() const {
  ParamList out;
  if (has_net2d) net2d.collect_buffers(out);
  return out;
}

ParamList FusionModel::all_state() const {
  ParamList out = parameters(/*include_2d=*/true);
  ParamList bufs = buffers();
  out.insert(out.end(), bufs.begin(), bufs.end());
  return out;
}

TensorPtr model_forward(Tape* tape, const FusionModel& model,
                        const std::vector<double>& positions,
                        const TensorPtr& point_features) {
  const BackboneConfig& cfg = model.backbone;
  const int n = static_cast<int>(positions.size() / 3);
  const bool xyz = cfg.use_xyz;

  if (fusion_needs_lift(model.mode)) {
    if (!point_features)
      throw ValidationError("model_forward: fusion mode requires lifted features");
    if (point_features->dim(1) != model.lifted_dim())
      throw ValidationError("model_forward: lifted feature width mismatch");
  }
  if (model.mode == FusionMode::XyzRgb &&
      (!point_features || point_features->dim(1) != 3))
    throw ValidationError("model_forward: xyzrgb requires per-point rgb");
  if (model.mode == FusionMode::XyzOnly && point_features)
    throw ValidationError("model_forward: xyz mode takes no point features");
  if (point_features && point_features->dim(0) != n)
    throw ShapeError("model_forward: feature rows != point count");

  const TensorPtr coords = positions_tensor(positions);

  // level-0 features per branch
  TensorPtr geo0;
  switch (model.mode) {
    case FusionMode::Early:
      geo0 = xyz ? concat(tape, {point_features, coords}) : point_features;
      break;
    case FusionMode::XyzRgb:
      geo0 = xyz ? concat(tape, {point_features, coords}) : point_features;
      break;
    case FusionMode::XyzOnly:
    case FusionMode::Late:
    case FusionMode::Intermediate:
      geo0 = xyz ? coords : nullptr;
      break;
  }

  const int L = cfg.levels();
  std::vector<std::vector<double>> level_pos(static_cast<size_t>(L) + 1);
  std::vector<TensorPtr> geo_feats(static_cast<size_t>(L) + 1);
  level_pos[0] = positions;
  geo_feats[0] = geo0;

  std::vector<SaStructure> structures;
  for (int l = 0; l < L; ++l) {
    SaStructure st =
        sa_structure(level_pos[static_cast<size_t>(l)],
                     cfg.centroid_counts[static_cast<size_t>(l)],
                     cfg.radii[static_cast<size_t>(l)],
                     cfg.group_sizes[static_cast<size_t>(l)]);
    geo_feats[static_cast<size_t>(l) + 1] =
        sa_apply(tape, st, level_pos[static_cast<size_t>(l)],
                 geo_feats[static_cast<size_t>(l)], model.sa[static_cast<size_t>(l)],
                 xyz);
    level_pos[static_cast<size_t>(l) + 1] = st.centroids;
    structures.push_back(std::move(st));
  }

  std::vector<TensorPtr> img_feats;
  if (model.mode == FusionMode::Intermediate) {
    img_feats.resize(static_cast<size_t>(L) + 1);
    img_feats[0] = point_features;
    for (int l = 0; l < L; ++l)
      img_feats[static_cast<size_t>(l) + 1] = sa_apply(
          tape, structures[static_cast<size_t>(l)],
          level_pos[static_cast<size_t>(l)], img_feats[static_cast<size_t>(l)],
          model.sa_img[static_cast<size_t>(l)], /*concat_centroid_xyz=*/false);
  }

  auto level_features = [&](int level) -> TensorPtr {
    if (model.mode != FusionMode::Intermediate)
      return geo_feats[static_cast<size_t>(level)];
    const TensorPtr& g = geo_feats[static_cast<size_t>(level)];
    const TensorPtr& im = img_feats[static_cast<size_t>(level)];
    if (g && im) return concat(tape, {g, im});
    return g ? g : im;
  };

  TensorPtr carry = level_features(L);
  for (int f = 0; f < L; ++f) {
    const int fine = L - 1 - f;
    carry = fp_forward(tape, level_pos[static_cast<size_t>(fine) + 1], carry,
                       level_pos[static_cast<size_t>(fine)],
                       level_features(fine), model.fp[static_cast<size_t>(f)]);
  }

  if (model.mode == FusionMode::Late)
    carry = concat(tape, {carry, point_features});
  return model.head.forward(tape, carry, /*final_relu=*/false);
}

}  // namespace pointfuse
