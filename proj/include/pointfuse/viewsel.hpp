#pragma once

#include <filesystem>
#include <vector>

#include "pointfuse/geometry.hpp"

namespace pointfuse {

// Precomputed frame <-> point overlap. `covered[slot]` holds the coarse point
// indices (positions into coarse_ids) whose nearest unprojected point of
// frames[slot] is closer than cover_threshold.
struct CoverageIndex {
  std::vector<int> coarse_ids;             // scene point indices, ascending
  std::vector<int> frame_ids;              // frame id per slot
  std::vector<std::vector<int>> covered;   // per slot, sorted coarse indices
  double cover_threshold = 0.1;
  double coarse_voxel = 0.2;

  size_t num_coarse() const { return coarse_ids.size(); }
  size_t num_frames() const { return frame_ids.size(); }
};

// Voxel-downsamples the scene (lowest point index wins per occupied voxel)
// and computes per-frame covered sets against full unprojections.
CoverageIndex build_coverage_index(const PointCloud& scene,
                                   const std::vector<RgbdFrame>& frames,
                                   double cover_threshold = 0.1,
                                   double coarse_voxel = 0.2);

// m greedy iterations, each picking the frame covering the most yet-uncovered
// target points; ties to the lowest frame_id; a frame is never picked twice.
// Returns frame ids in selection order (fixed length m).
std::vector<int> greedy_select(const CoverageIndex& index,
                               const std::vector<int>& target, int m);

// Fraction of sparse points whose nearest dense point is strictly closer than
// threshold. Empty dense cloud -> 0.
double coverage(const PointCloud& sparse, const PointCloud& dense,
                double threshold = 0.1);

void save_coverage_index(const CoverageIndex& index,
                         const std::filesystem::path& path);
CoverageIndex load_coverage_index(const std::filesystem::path& path);

}  // namespace pointfuse
