#include "pointfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <unordered_map>

#include "pointfuse/errors.hpp"

namespace pointfuse {

namespace {

constexpr uint64_t kInferTag = 0x696e666572ULL;
constexpr uint64_t kTrainStepTag = 0x73746570ULL;

double min_z(const PointCloud& cloud) {
  double z = 1e300;
  for (size_t i = 0; i < cloud.size(); ++i)
    z = std::min(z, cloud.positions[3 * i + 2]);
  return z;
}

uint64_t double_bits(double v) {
  uint64_t b;
  std::memcpy(&b, &v, sizeof(b));
  return b;
}

}  // namespace

std::vector<int> points_in_chunk(const PointCloud& cloud, double origin_x,
                                 double origin_y, double size) {
  std::vector<int> out;
  for (size_t i = 0; i < cloud.size(); ++i) {
    const double x = cloud.positions[3 * i];
    const double y = cloud.positions[3 * i + 1];
    if (x >= origin_x && x <= origin_x + size && y >= origin_y &&
        y <= origin_y + size)
      out.push_back(static_cast<int>(i));
  }
  return out;
}

ChunkSpec make_chunk(const PointCloud& cloud, double origin_x, double origin_y,
                     double size, int n_chunk, Rng& rng) {
  ChunkSpec spec;
  spec.origin_x = origin_x;
  spec.origin_y = origin_y;
  spec.size = size;
  spec.member_indices = points_in_chunk(cloud, origin_x, origin_y, size);
  const int m = static_cast<int>(spec.member_indices.size());
  if (m == 0) throw SizeError("make_chunk: empty chunk");
  spec.sampled_indices.reserve(static_cast<size_t>(n_chunk));
  if (m >= n_chunk) {
    for (int pick : sample_without_replacement(m, n_chunk, rng))
      spec.sampled_indices.push_back(
          spec.member_indices[static_cast<size_t>(pick)]);
  } else {
    for (int i = 0; i < n_chunk; ++i)
      spec.sampled_indices.push_back(
          spec.member_indices[static_cast<size_t>(rng.uniform_int(m))]);
  }
  return spec;
}

TrainChunk sample_train_chunk(const Scene& scene, double chunk_size,
                              int n_chunk, Rng& rng) {
  const PointCloud& cloud = scene.cloud;
  if (!cloud.has_labels())
    throw ValidationError("sample_train_chunk: scene has no labels");
  double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
  for (size_t i = 0; i < cloud.size(); ++i) {
    minx = std::min(minx, cloud.positions[3 * i]);
    maxx = std::max(maxx, cloud.positions[3 * i]);
    miny = std::min(miny, cloud.positions[3 * i + 1]);
    maxy = std::max(maxy, cloud.positions[3 * i + 1]);
  }

  double best_frac = -1.0, best_ox = 0, best_oy = 0;
  std::vector<int> best_members;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double ox = rng.uniform(minx - chunk_size / 2, maxx - chunk_size / 2);
    const double oy = rng.uniform(miny - chunk_size / 2, maxy - chunk_size / 2);
    auto members = points_in_chunk(cloud, ox, oy, chunk_size);
    if (members.empty()) continue;
    size_t annotated = 0;
    for (int i : members)
      if (cloud.labels[static_cast<size_t>(i)] >= 0) ++annotated;
    const double frac =
        static_cast<double>(annotated) / static_cast<double>(members.size());
    if (frac > best_frac) {
      best_frac = frac;
      best_ox = ox;
      best_oy = oy;
      best_members = std::move(members);
    }
    if (frac >= 0.3) break;
  }
  if (best_frac <= 0)
    throw ValidationError(
        "sample_train_chunk: no annotated chunk found after 100 tries");

  TrainChunk chunk;
  chunk.spec.origin_x = best_ox;
  chunk.spec.origin_y = best_oy;
  chunk.spec.size = chunk_size;
  chunk.spec.member_indices = std::move(best_members);
  const int m = static_cast<int>(chunk.spec.member_indices.size());
  if (m >= n_chunk) {
    for (int pick : sample_without_replacement(m, n_chunk, rng))
      chunk.spec.sampled_indices.push_back(
          chunk.spec.member_indices[static_cast<size_t>(pick)]);
  } else {
    for (int i = 0; i < n_chunk; ++i)
      chunk.spec.sampled_indices.push_back(
          chunk.spec.member_indices[static_cast<size_t>(rng.uniform_int(m))]);
  }

  chunk.rotation = rng.uniform(0, 2 * std::numbers::pi);
  const double cx = best_ox + chunk_size / 2, cy = best_oy + chunk_size / 2;
  const double cr = std::cos(chunk.rotation), sr = std::sin(chunk.rotation);
  chunk.positions.reserve(chunk.spec.sampled_indices.size() * 3);
  chunk.labels.reserve(chunk.spec.sampled_indices.size());
  for (int idx : chunk.spec.sampled_indices) {
    const Vec3 p = cloud.point(static_cast<size_t>(idx));
    const double dx = p.x - cx, dy = p.y - cy;
    chunk.positions.insert(chunk.positions.end(),
                           {cx + cr * dx - sr * dy, cy + sr * dx + cr * dy,
                            p.z});
    chunk.labels.push_back(cloud.labels[static_cast<size_t>(idx)]);
  }
  return chunk;
}

Pose rotate_pose_z(const Pose& pose, double angle, const Vec3& pivot) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double rz[9] = {c, -s, 0, s, c, 0, 0, 0, 1};
  Pose out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double v = 0;
      for (int k = 0; k < 3; ++k)
        v += rz[3 * i + k] * pose.rotation[3 * k + j];
      out.rotation[3 * i + j] = v;
    }
  const Vec3 d = pose.translation - pivot;
  out.translation = Vec3{pivot.x + c * d.x - s * d.y,
                         pivot.y + s * d.x + c * d.y, pivot.z + d.z};
  return out;
}

TensorPtr FeatureMapCache::get(const Net2d& net, const Scene& scene,
                               int frame_index) {
  const auto key = std::make_pair(&scene, frame_index);
  auto it = maps_.find(key);
  const RgbdFrame& frame = scene.frames[static_cast<size_t>(frame_index)];
  const int c = net.cfg.feature_dim, h = frame.height(), w = frame.width();
  if (it == maps_.end()) {
    auto rgb = frames_to_batch({&frame}, {false});
    auto out = const_cast<Net2d&>(net).forward(nullptr, rgb, /*training=*/false);
    std::vector<float> buf(out.features->numel());
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(out.features->data[i]);
    it = maps_.emplace(key, std::move(buf)).first;
  }
  auto t = make_tensor({c, h, w});
  for (size_t i = 0; i < t->numel(); ++i)
    t->data[i] = static_cast<double>(it->second[i]);
  return t;
}

std::vector<double> inverse_log_frequency_weights(const Corpus& corpus) {
  std::vector<int64_t> counts(static_cast<size_t>(corpus.num_classes), 0);
  int64_t total = 0;
  for (const Scene& s : corpus.train)
    for (int l : s.cloud.labels)
      if (l >= 0) {
        ++counts[static_cast<size_t>(l)];
        ++total;
      }
  std::vector<double> weights(counts.size(), 1.0);
  if (total == 0) return weights;
  for (size_t c = 0; c < counts.size(); ++c) {
    const double freq = static_cast<double>(counts[c]) / total;
    weights[c] = 1.0 / std::log(1.2 + freq);
  }
  return weights;
}

namespace {

// Per-chunk forward shared by training and inference. Positions are world
// coordinates (already rotated for augmented training chunks).
struct ChunkContext {
  const Scene* scene = nullptr;
  const CoverageIndex* coverage = nullptr;
  const PointCloud* cloud = nullptr;               // cloud being labeled
  const std::vector<double>* positions = nullptr;  // n x 3 world
  const std::vector<int>* point_indices = nullptr; // rows into `cloud`
  double center_x = 0, center_y = 0, floor_z = 0;
  double rotation = 0;  // applied to selected frame poses
  std::vector<int> selected_frames;
};

// coarse points of the index that fall inside the chunk bounds
std::vector<int> chunk_target(const Scene& scene, const CoverageIndex& cov,
                              double ox, double oy, double size) {
  std::vector<int> target;
  for (size_t ci = 0; ci < cov.coarse_ids.size(); ++ci) {
    const Vec3 p =
        scene.cloud.point(static_cast<size_t>(cov.coarse_ids[ci]));
    if (p.x >= ox && p.x <= ox + size && p.y >= oy && p.y <= oy + size)
      target.push_back(static_cast<int>(ci));
  }
  return target;
}

TensorPtr chunk_point_features(Tape* tape, const FusionModel& model,
                               const ChunkContext& ctx,
                               const ExperimentConfig& cfg,
                               FeatureMapCache* cache, bool train_2d,
                               Rng& rng) {
  if (model.mode == FusionMode::XyzOnly) return nullptr;
  if (model.mode == FusionMode::XyzRgb) {
    const PointCloud& cloud = *ctx.cloud;
    if (!cloud.has_features())
      throw ValidationError("xyzrgb fusion requires per-point colors");
    const int n = static_cast<int>(ctx.point_indices->size());
    auto rgb = make_tensor({n, cloud.feature_dim});
    for (int i = 0; i < n; ++i) {
      const double* src =
          cloud.features.data() +
          static_cast<size_t>((*ctx.point_indices)[static_cast<size_t>(i)]) *
              cloud.feature_dim;
      std::copy(src, src + cloud.feature_dim,
                rgb->data.data() + static_cast<size_t>(i) * cloud.feature_dim);
    }
    return rgb;
  }

  // lift path: 2d features of the selected views distilled into the chunk
  std::vector<RgbdFrame> rotated;
  std::vector<const RgbdFrame*> frames;
  std::vector<TensorPtr> maps;
  const Vec3 pivot{ctx.center_x, ctx.center_y, 0.0};
  for (int fid : ctx.selected_frames) {
    int findex = -1;
    for (size_t i = 0; i < ctx.scene->frames.size(); ++i)
      if (ctx.scene->frames[i].frame_id == fid) {
        findex = static_cast<int>(i);
        break;
      }
    if (findex < 0) throw StateError("selected frame id not found in scene");
    TensorPtr map;
    if (train_2d) {
      auto rgb = frames_to_batch(
          {&ctx.scene->frames[static_cast<size_t>(findex)]}, {false});
      auto out = const_cast<Net2d&>(model.net2d).forward(tape, rgb,
                                                         /*training=*/true);
      map = reshape(tape, out.features,
                    {model.net2d.cfg.feature_dim, model.net2d.cfg.height,
                     model.net2d.cfg.width});
    } else {
      map = cache->get(model.net2d, *ctx.scene, findex);
    }
    maps.push_back(map);
    RgbdFrame f = ctx.scene->frames[static_cast<size_t>(findex)];
    if (ctx.rotation != 0.0)
      f.pose = rotate_pose_z(f.pose, ctx.rotation, pivot);
    rotated.push_back(std::move(f));
  }
  for (const RgbdFrame& f : rotated) frames.push_back(&f);

  DenseCloud dense = build_dense(tape, frames, maps, cfg.train.n_rgb, rng);
  PointCloud sparse;
  sparse.positions = *ctx.positions;
  return aggregate(tape, sparse, dense.cloud, dense.features, model.aggregator,
                   model.has_agg_mlp ? &model.agg_mlp : nullptr);
}

TensorPtr forward_chunk(Tape* tape, const FusionModel& model,
                        const ChunkContext& ctx, const ExperimentConfig& cfg,
                        FeatureMapCache* cache, bool train_2d, Rng& rng) {
  TensorPtr features =
      chunk_point_features(tape, model, ctx, cfg, cache, train_2d, rng);
  const size_t n = ctx.positions->size() / 3;
  std::vector<double> local(ctx.positions->size());
  for (size_t i = 0; i < n; ++i) {
    local[3 * i] = (*ctx.positions)[3 * i] - ctx.center_x;
    local[3 * i + 1] = (*ctx.positions)[3 * i + 1] - ctx.center_y;
    local[3 * i + 2] = (*ctx.positions)[3 * i + 2] - ctx.floor_z;
  }
  return model_forward(tape, model, local, features);
}

}  // namespace

TrainOutput train_fusion(const Corpus& corpus, const ExperimentConfig& cfg,
                         const Net2d* pretrained2d, std::ostream* log) {
  cfg.train.validate();
  if (corpus.train.empty())
    throw ValidationError("train_fusion: no training scenes");
  const bool lift = fusion_needs_lift(cfg.fusion);
  if (lift && cfg.train.freeze_2d && !pretrained2d)
    throw DependencyError(
        "train_fusion: freeze_2d requires pretrained 2d weights");

  TrainOutput out{FusionModel::init(cfg.fusion, cfg.backbone, cfg.lift,
                                    cfg.net2d, cfg.train.seed),
                  {}};
  FusionModel& model = out.model;
  if (lift && pretrained2d) {
    ParamList src = pretrained2d->all_state();
    ParamList dst = model.net2d.all_state();
    apply_checkpoint(src, dst);
  }

  const bool train_2d = lift && !cfg.train.freeze_2d;
  ParamList params = model.parameters(/*include_2d=*/train_2d);
  std::vector<std::vector<double>> velocities;
  std::vector<double> class_weights;
  if (cfg.train.class_weights)
    class_weights = inverse_log_frequency_weights(corpus);

  FeatureMapCache cache;
  std::vector<double> floor(corpus.train.size());
  for (size_t s = 0; s < corpus.train.size(); ++s)
    floor[s] = min_z(corpus.train[s].cloud);

  const int steps =
      std::max(1, cfg.train.chunks_per_epoch / cfg.train.batch_size);
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    double loss_sum = 0;
    int chunk_count = 0;
    for (int step = 0; step < steps; ++step) {
      zero_grads(params);
      for (int slot = 0; slot < cfg.train.batch_size; ++slot) {
        Rng rng(mix_seed(cfg.train.seed, kTrainStepTag,
                         static_cast<uint64_t>(epoch) * 1000003ULL +
                             static_cast<uint64_t>(step),
                         static_cast<uint64_t>(slot)));
        const int si = rng.uniform_int(static_cast<int>(corpus.train.size()));
        const Scene& scene = corpus.train[static_cast<size_t>(si)];
        TrainChunk chunk = sample_train_chunk(scene, cfg.train.chunk_size,
                                              cfg.train.n_chunk, rng);

        ChunkContext ctx;
        ctx.scene = &scene;
        ctx.coverage = &corpus.train_coverage[static_cast<size_t>(si)];
        ctx.positions = &chunk.positions;
        ctx.scene_indices = &chunk.spec.sampled_indices;
        ctx.center_x = chunk.spec.origin_x + chunk.spec.size / 2;
        ctx.center_y = chunk.spec.origin_y + chunk.spec.size / 2;
        ctx.floor_z = floor[static_cast<size_t>(si)];
        ctx.rotation = chunk.rotation;
        if (lift)
          ctx.selected_frames = greedy_select(
              *ctx.coverage,
              chunk_target(scene, *ctx.coverage, chunk.spec.origin_x,
                           chunk.spec.origin_y, chunk.spec.size),
              cfg.train.views_m);

        Tape tape;
        TensorPtr logits =
            forward_chunk(&tape, model, ctx, cfg, &cache, train_2d, rng);
        TensorPtr ce = softmax_cross_entropy(&tape, logits, chunk.labels,
                                             class_weights, -1);
        check_finite(*ce, "train loss");
        loss_sum += ce->data[0];
        ++chunk_count;
        TensorPtr loss = scale(&tape, ce, 1.0 / cfg.train.batch_size);
        tape.backward(loss);
      }
      sgd_step(params, velocities, cfg.train.sgd, epoch);
    }
    MetricsRow row;
    row.key = std::to_string(epoch);
    row.split = "train";
    row.loss = loss_sum / std::max(1, chunk_count);
    row.evaluable = false;  // loss-only row
    out.metrics.push_back(row);
    if (log)
      *log << "[epoch " << epoch << "] train loss " << row.loss << "\n";

    if (cfg.train.val_every > 0 && (epoch + 1) % cfg.train.val_every == 0 &&
        !corpus.val.empty()) {
      MetricsRow vrow = evaluate_split(model, corpus, "val", cfg,
                                       std::to_string(epoch));
      out.metrics.push_back(vrow);
      if (log)
        *log << "[epoch " << epoch << "] val miou " << vrow.iou.miou << "\n";
    }
  }
  if (!corpus.val.empty()) {
    MetricsRow vrow = evaluate_split(model, corpus, "val", cfg, "final");
    out.metrics.push_back(vrow);
    if (log) *log << "[final] val miou " << vrow.iou.miou << "\n";
  }
  return out;
}

std::vector<int> infer_cloud(const PointCloud& cloud, const Scene& scene,
                             const CoverageIndex& coverage, int scene_tag,
                             const FusionModel& model,
                             const ExperimentConfig& cfg, uint64_t seed) {
  const size_t n = cloud.size();
  if (n == 0) throw SizeError("infer_cloud: empty scene");
  const double stride = cfg.eval.stride;
  const double size = cfg.train.chunk_size;

  double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
  for (size_t i = 0; i < n; ++i) {
    minx = std::min(minx, cloud.positions[3 * i]);
    maxx = std::max(maxx, cloud.positions[3 * i]);
    miny = std::min(miny, cloud.positions[3 * i + 1]);
    maxy = std::max(maxy, cloud.positions[3 * i + 1]);
  }
  const double floor_z = min_z(cloud);

  FeatureMapCache cache;
  std::vector<std::unordered_map<int, int>> votes(n);  // class -> count

  for (double oy = miny; oy <= maxy; oy += stride) {
    for (double ox = minx; ox <= maxx; ox += stride) {
      Rng rng(mix_seed(mix_seed(seed, kInferTag, static_cast<uint64_t>(scene_tag)),
                       double_bits(ox), double_bits(oy)));
      std::vector<int> members = points_in_chunk(cloud, ox, oy, size);
      if (members.empty()) continue;
      ChunkSpec spec;
      const int m = static_cast<int>(members.size());
      if (m >= cfg.train.n_chunk) {
        for (int pick :
             sample_without_replacement(m, cfg.train.n_chunk, rng))
          spec.sampled_indices.push_back(members[static_cast<size_t>(pick)]);
      } else {
        for (int i = 0; i < cfg.train.n_chunk; ++i)
          spec.sampled_indices.push_back(
              members[static_cast<size_t>(rng.uniform_int(m))]);
      }

      std::vector<double> positions;
      positions.reserve(spec.sampled_indices.size() * 3);
      for (int idx : spec.sampled_indices) {
        const Vec3 p = cloud.point(static_cast<size_t>(idx));
        positions.insert(positions.end(), {p.x, p.y, p.z});
      }

      ChunkContext ctx;
      ctx.scene = &scene;
      ctx.coverage = &coverage;
      ctx.positions = &positions;
      ctx.scene_indices = &spec.sampled_indices;
      ctx.center_x = ox + size / 2;
      ctx.center_y = oy + size / 2;
      ctx.floor_z = floor_z;
      ctx.rotation = 0.0;
      if (fusion_needs_lift(model.mode))
        ctx.selected_frames =
            greedy_select(coverage,
                          chunk_target(scene, coverage, ox, oy, size),
                          cfg.train.views_m);

      TensorPtr logits = forward_chunk(nullptr, model, ctx, cfg, &cache,
                                       /*train_2d=*/false, rng);
      const std::vector<int> preds = argmax_rows(*logits);
      // one vote per distinct point per chunk; duplicates agree by identity
      std::unordered_map<int, int> seen;
      for (size_t r = 0; r < spec.sampled_indices.size(); ++r) {
        const int pi = spec.sampled_indices[r];
        if (seen.emplace(pi, preds[r]).second)
          ++votes[static_cast<size_t>(pi)][preds[r]];
      }
    }
  }

  // special case: chunk features for xyzrgb come from scene.cloud rows, so
  // the cloud passed in must be the scene cloud itself for that mode
  std::vector<int> labels(n, -1);
  std::vector<double> voted_positions;
  std::vector<int> voted_points;
  for (size_t i = 0; i < n; ++i) {
    if (votes[i].empty()) continue;
    int best_class = -1, best_count = -1;
    for (int c = 0; c < model.backbone.num_classes; ++c) {
      auto it = votes[i].find(c);
      if (it == votes[i].end()) continue;
      if (it->second > best_count) {  // ties keep the lowest class id
        best_count = it->second;
        best_class = c;
      }
    }
    labels[i] = best_class;
    const Vec3 p = cloud.point(i);
    voted_positions.insert(voted_positions.end(), {p.x, p.y, p.z});
    voted_points.push_back(static_cast<int>(i));
  }
  if (voted_points.empty())
    throw StateError("infer_cloud: no chunk produced predictions");
  KdTree tree(voted_positions);
  for (size_t i = 0; i < n; ++i) {
    if (labels[i] >= 0) continue;
    const int nn = tree.nearest(cloud.point(i));
    labels[i] = labels[static_cast<size_t>(voted_points[static_cast<size_t>(nn)])];
  }
  return labels;
}

std::vector<int> infer_scene(const Scene& scene, const CoverageIndex& coverage,
                             int scene_tag, const FusionModel& model,
                             const ExperimentConfig& cfg, uint64_t seed) {
  return infer_cloud(scene.cloud, scene, coverage, scene_tag, model, cfg, seed);
}

namespace {

const std::vector<Scene>& split_scenes(const Corpus& corpus,
                                       const std::string& split) {
  if (split == "train") return corpus.train;
  if (split == "val") return corpus.val;
  throw ValidationError("unknown split '" + split + "'");
}

const std::vector<CoverageIndex>& split_coverage(const Corpus& corpus,
                                                 const std::string& split) {
  return split == "train" ? corpus.train_coverage : corpus.val_coverage;
}

}  // namespace

MetricsRow evaluate_split(const FusionModel& model, const Corpus& corpus,
                          const std::string& split, const ExperimentConfig& cfg,
                          const std::string& key) {
  const auto& scenes = split_scenes(corpus, split);
  const auto& coverages = split_coverage(corpus, split);
  ConfusionMatrix cm(model.backbone.num_classes);
  for (size_t s = 0; s < scenes.size(); ++s) {
    const auto labels = infer_scene(scenes[s], coverages[s],
                                    static_cast<int>(s), model, cfg,
                                    cfg.eval.seed);
    for (size_t i = 0; i < labels.size(); ++i)
      cm.add(scenes[s].cloud.labels[i], labels[i]);
  }
  MetricsRow row;
  row.key = key;
  row.split = split;
  row.loss = 0;
  row.iou = miou(cm);
  return row;
}

std::vector<RobustnessRow> density_robustness(const FusionModel& model,
                                              const Corpus& corpus,
                                              const ExperimentConfig& cfg) {
  std::vector<RobustnessRow> rows;
  for (double ratio : cfg.eval.keep_ratios) {
    RobustnessRow row;
    row.ratio = ratio;
    ConfusionMatrix cm(model.backbone.num_classes);
    bool evaluable = !corpus.val.empty();
    for (size_t s = 0; s < corpus.val.size() && evaluable; ++s) {
      const Scene& scene = corpus.val[s];
      const auto keep =
          subsample_indices(scene.cloud.size(), ratio,
                            mix_seed(cfg.eval.seed, 0x726f62ULL, s));
      if (keep.empty()) {
        evaluable = false;
        break;
      }
      PointCloud reduced;
      reduced.feature_dim = 0;  // xyzrgb keeps full-resolution colors aside
      reduced.positions.reserve(keep.size() * 3);
      reduced.labels.reserve(keep.size());
      for (int idx : keep) {
        const Vec3 p = scene.cloud.point(static_cast<size_t>(idx));
        reduced.push_point(p);
        reduced.labels.push_back(scene.cloud.labels[static_cast<size_t>(idx)]);
      }
      const auto labels =
          infer_cloud(reduced, scene, corpus.val_coverage[s],
                      static_cast<int>(s), model, cfg, cfg.eval.seed);
      for (size_t i = 0; i < labels.size(); ++i)
        cm.add(reduced.labels[i], labels[i]);
    }
    row.evaluable = evaluable;
    if (evaluable) row.iou = miou(cm);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ChunkViewsRow> dump_views(const Scene& scene,
                                      const CoverageIndex& cov_index,
                                      const ExperimentConfig& cfg,
                                      int views_m) {
  std::vector<ChunkViewsRow> rows;
  const PointCloud& cloud = scene.cloud;
  double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
  for (size_t i = 0; i < cloud.size(); ++i) {
    minx = std::min(minx, cloud.positions[3 * i]);
    maxx = std::max(maxx, cloud.positions[3 * i]);
    miny = std::min(miny, cloud.positions[3 * i + 1]);
    maxy = std::max(maxy, cloud.positions[3 * i + 1]);
  }
  const double stride = cfg.eval.stride, size = cfg.train.chunk_size;
  for (double oy = miny; oy <= maxy; oy += stride) {
    for (double ox = minx; ox <= maxx; ox += stride) {
      auto members = points_in_chunk(cloud, ox, oy, size);
      if (members.empty()) continue;
      ChunkViewsRow row;
      row.scene = scene.name;
      row.origin_x = ox;
      row.origin_y = oy;
      row.frame_ids = greedy_select(
          cov_index, chunk_target(scene, cov_index, ox, oy, size), views_m);

      PointCloud chunk_cloud;
      chunk_cloud.positions.reserve(members.size() * 3);
      for (int i : members) {
        const Vec3 p = cloud.point(static_cast<size_t>(i));
        chunk_cloud.push_point(p);
      }
      Rng rng(mix_seed(cfg.eval.seed, 0x76696577ULL, double_bits(ox),
                       double_bits(oy)));
      PointCloud dense;
      for (int fid : row.frame_ids) {
        for (const RgbdFrame& f : scene.frames)
          if (f.frame_id == fid) {
            PointCloud part = unproject(f, cfg.train.n_rgb, rng);
            dense.positions.insert(dense.positions.end(),
                                   part.positions.begin(),
                                   part.positions.end());
          }
      }
      row.coverage =
          dense.size() == 0 ? 0.0 : coverage(chunk_cloud, dense, 0.1);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

double mean_chunk_coverage(const Corpus& corpus, const ExperimentConfig& cfg,
                           int views_m) {
  double sum = 0;
  int count = 0;
  for (size_t s = 0; s < corpus.train.size(); ++s) {
    const auto rows = dump_views(corpus.train[s], corpus.train_coverage[s],
                                 cfg, views_m);
    for (const auto& r : rows) {
      sum += r.coverage;
      ++count;
    }
  }
  return count ? sum / count : 0.0;
}

}  // namespace pointfuse
