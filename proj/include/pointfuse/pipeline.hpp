#pragma once

#include <map>
#include <ostream>
#include <vector>

#include "pointfuse/config.hpp"
#include "pointfuse/eval.hpp"
#include "pointfuse/pointnet2.hpp"
#include "pointfuse/sceneio.hpp"

namespace pointfuse {

struct ChunkSpec {
  double origin_x = 0, origin_y = 0;
  double size = 1.5;
  std::vector<int> member_indices;   // points inside the xy square
  std::vector<int> sampled_indices;  // exactly n_chunk entries
};

// indices of points with origin <= x,y <= origin+size (closed bounds)
std::vector<int> points_in_chunk(const PointCloud& cloud, double origin_x,
                                 double origin_y, double size);

// member selection plus resampling to exactly n_chunk (without replacement
// when the chunk is large enough, with replacement otherwise)
ChunkSpec make_chunk(const PointCloud& cloud, double origin_x, double origin_y,
                     double size, int n_chunk, Rng& rng);

struct TrainChunk {
  ChunkSpec spec;
  double rotation = 0;            // about +z through the chunk center
  std::vector<double> positions;  // n_chunk x 3, rotated world coordinates
  std::vector<int> labels;        // n_chunk
};

// Rejection-samples chunk origins until at least 30% of the chunk points are
// annotated (cap 100 tries, then the best candidate); applies a random
// up-axis rotation to the returned coordinates.
TrainChunk sample_train_chunk(const Scene& scene, double chunk_size,
                              int n_chunk, Rng& rng);

// pose of a camera rigidly rotated by `angle` about +z through `pivot`
Pose rotate_pose_z(const Pose& pose, double angle, const Vec3& pivot);

// Frozen per-frame feature maps, computed lazily in eval mode.
class FeatureMapCache {
 public:
  TensorPtr get(const Net2d& net, const Scene& scene, int frame_index);
  void clear() { maps_.clear(); }

 private:
  std::map<std::pair<const Scene*, int>, std::vector<float>> maps_;
};

// inverse-log-frequency class weights over the labeled train points
std::vector<double> inverse_log_frequency_weights(const Corpus& corpus);

struct TrainOutput {
  FusionModel model;
  std::vector<MetricsRow> metrics;
};

// The full training loop: per chunk, select views, lift 2d features, fuse and
// step SGD. `pretrained2d` is required for lift modes when train.freeze_2d.
TrainOutput train_fusion(const Corpus& corpus, const ExperimentConfig& cfg,
                         const Net2d* pretrained2d,
                         std::ostream* log = nullptr);

// Sliding-window inference: per-point majority vote over chunk predictions,
// ties to the lowest class id; unsampled points take the nearest predicted
// point's label. `cloud` may be a subsampled view of scene.cloud; view
// selection still uses the original scene geometry.
std::vector<int> infer_cloud(const PointCloud& cloud, const Scene& scene,
                             const CoverageIndex& coverage, int scene_tag,
                             const FusionModel& model,
                             const ExperimentConfig& cfg, uint64_t seed);

std::vector<int> infer_scene(const Scene& scene, const CoverageIndex& coverage,
                             int scene_tag, const FusionModel& model,
                             const ExperimentConfig& cfg, uint64_t seed);

// mIoU row over a whole split ("train"/"val")
MetricsRow evaluate_split(const FusionModel& model, const Corpus& corpus,
                          const std::string& split, const ExperimentConfig& cfg,
                          const std::string& key);

// The density-robustness sweep (uniform subsампling at each keep ratio; the
// dense image path is untouched).
std::vector<RobustnessRow> density_robustness(const FusionModel& model,
                                              const Corpus& corpus,
                                              const ExperimentConfig& cfg);

struct ChunkViewsRow {
  std::string scene;
  double origin_x = 0, origin_y = 0;
  std::vector<int> frame_ids;
  double coverage = 0;  // after all selected views
};

// per-chunk greedy selections over the inference grid
std::vector<ChunkViewsRow> dump_views(const Scene& scene,
                                      const CoverageIndex& coverage,
                                      const ExperimentConfig& cfg, int views_m);

// mean chunk coverage over the train split for a given view count
double mean_chunk_coverage(const Corpus& corpus, const ExperimentConfig& cfg,
                           int views_m);

}  // namespace pointfuse
