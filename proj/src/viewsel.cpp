#include "pointfuse/viewsel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "pointfuse/errors.hpp"

namespace pointfuse {

namespace {

// 3d voxel key packed into one 64-bit value (21 bits per axis, offset binary)
uint64_t voxel_key(const Vec3& p, double voxel) {
  const auto q = [voxel](double v) {
    return static_cast<uint64_t>(
               static_cast<int64_t>(std::floor(v / voxel)) + (1LL << 20)) &
           ((1ULL << 21) - 1);
  };
  return (q(p.x) << 42) | (q(p.y) << 21) | q(p.z);
}

}  // namespace

CoverageIndex build_coverage_index(const PointCloud& scene,
                                   const std::vector<RgbdFrame>& frames,
                                   double cover_threshold,
                                   double coarse_voxel) {
  if (frames.empty())
    throw SizeError("build_coverage_index: at least one frame is required");
  if (!(cover_threshold > 0) || !(coarse_voxel > 0))
    throw ValidationError("build_coverage_index: thresholds must be positive");

  CoverageIndex index;
  index.cover_threshold = cover_threshold;
  index.coarse_voxel = coarse_voxel;

  // one representative per occupied voxel; iterating in index order makes the
  // lowest index win and keeps coarse_ids ascending
  std::unordered_map<uint64_t, int> voxels;
  for (size_t i = 0; i < scene.size(); ++i) {
    const uint64_t key = voxel_key(scene.point(i), coarse_voxel);
    if (voxels.emplace(key, static_cast<int>(i)).second)
      index.coarse_ids.push_back(static_cast<int>(i));
  }

  const double t2 = cover_threshold * cover_threshold;
  // full unprojection per frame: the budgeted subsampling belongs to the
  // lifting path, not the overlap precomputation
  Rng rng(0);  // unused; no subsampling at max_points = H*W
  for (const RgbdFrame& frame : frames) {
    index.frame_ids.push_back(frame.frame_id);
    std::vector<int>& cov = index.covered.emplace_back();
    const PointCloud unproj =
        unproject(frame, frame.width() * frame.height(), rng);
    if (unproj.size() == 0) continue;
    KdTree tree(unproj.positions);
    for (size_t ci = 0; ci < index.coarse_ids.size(); ++ci) {
      double d2 = 0;
      tree.nearest(scene.point(static_cast<size_t>(index.coarse_ids[ci])), &d2);
      if (d2 < t2) cov.push_back(static_cast<int>(ci));
    }
  }
  return index;
}

std::vector<int> greedy_select(const CoverageIndex& index,
                               const std::vector<int>& target, int m) {
  if (m < 1) throw ValidationError("greedy_select: m must be >= 1");
  const size_t nf = index.num_frames();
  if (nf == 0) throw SizeError("greedy_select: no frames in index");
  if (static_cast<size_t>(m) > nf)
    throw SizeError("greedy_select: m exceeds frame count");

  std::vector<char> uncovered(index.num_coarse(), 0);
  for (int t : target) {
    if (t < 0 || t >= static_cast<int>(index.num_coarse()))
      throw SizeError("greedy_select: target index out of range");
    uncovered[static_cast<size_t>(t)] = 1;
  }
  std::vector<char> used(nf, 0);

  std::vector<int> picks;
  picks.reserve(static_cast<size_t>(m));
  for (int step = 0; step < m; ++step) {
    int best_slot = -1, best_gain = -1, best_id = 0;
    for (size_t f = 0; f < nf; ++f) {
      if (used[f]) continue;
      int gain = 0;
      for (int ci : index.covered[f])
        if (uncovered[static_cast<size_t>(ci)]) ++gain;
      const int id = index.frame_ids[f];
      if (gain > best_gain || (gain == best_gain && id < best_id)) {
        best_gain = gain;
        best_slot = static_cast<int>(f);
        best_id = id;
      }
    }
    used[static_cast<size_t>(best_slot)] = 1;
    picks.push_back(index.frame_ids[static_cast<size_t>(best_slot)]);
    for (int ci : index.covered[static_cast<size_t>(best_slot)])
      uncovered[static_cast<size_t>(ci)] = 0;
  }
  return picks;
}

double coverage(const PointCloud& sparse, const PointCloud& dense,
                double threshold) {
  if (sparse.size() == 0)
    throw SizeError("coverage: sparse cloud must be non-empty");
  if (dense.size() == 0) return 0.0;
  const double t2 = threshold * threshold;
  KdTree tree(dense.positions);
  size_t hit = 0;
  for (size_t i = 0; i < sparse.size(); ++i) {
    double d2 = 0;
    tree.nearest(sparse.point(i), &d2);
    if (d2 < t2) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(sparse.size());
}

void save_coverage_index(const CoverageIndex& index,
                         const std::filesystem::path& path) {
  nlohmann::json j;
  j["coarse_voxel"] = index.coarse_voxel;
  j["cover_threshold"] = index.cover_threshold;
  j["num_coarse"] = index.coarse_ids.size();
  j["coarse_ids"] = index.coarse_ids;
  nlohmann::json frames = nlohmann::json::array();
  for (size_t f = 0; f < index.num_frames(); ++f) {
    frames.push_back({{"frame_id", index.frame_ids[f]},
                      {"covered", index.covered[f]}});
  }
  j["frames"] = std::move(frames);
  std::ofstream out(path);
  if (!out) throw DependencyError("cannot write " + path.string());
  out << j.dump() << "\n";
}

CoverageIndex load_coverage_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot read " + path.string());
  nlohmann::json j;
  in >> j;
  CoverageIndex index;
  index.coarse_voxel = j.at("coarse_voxel").get<double>();
  index.cover_threshold = j.at("cover_threshold").get<double>();
  index.coarse_ids = j.at("coarse_ids").get<std::vector<int>>();
  for (const auto& f : j.at("frames")) {
    index.frame_ids.push_back(f.at("frame_id").get<int>());
    index.covered.push_back(f.at("covered").get<std::vector<int>>());
  }
  if (j.at("num_coarse").get<size_t>() != index.coarse_ids.size())
    throw ValidationError("coverage index: inconsistent coarse count");
  return index;
}

}  // namespace pointfuse
