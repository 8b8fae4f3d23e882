#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "pointfuse/rng.hpp"

namespace pointfuse {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

// N points in world frame, meters. Optional per-point features (row-major
// N x feature_dim) and integer class labels (-1 = unlabeled).
struct PointCloud {
  std::vector<double> positions;  // 3N interleaved xyz
  std::vector<double> features;   // N * feature_dim
  int feature_dim = 0;
  std::vector<int> labels;

  size_t size() const { return positions.size() / 3; }
  bool has_features() const { return feature_dim > 0; }
  bool has_labels() const { return !labels.empty(); }

  Vec3 point(size_t i) const {
    return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
  }
  void push_point(const Vec3& p) {
    positions.insert(positions.end(), {p.x, p.y, p.z});
  }

  void validate() const;  // throws on NaN/Inf or mismatched row counts
};

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

// camera-to-world transform
struct Pose {
  double rotation[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major 3x3
  Vec3 translation;

  Vec3 rotate(const Vec3& p) const {
    return {rotation[0] * p.x + rotation[1] * p.y + rotation[2] * p.z,
            rotation[3] * p.x + rotation[4] * p.y + rotation[5] * p.z,
            rotation[6] * p.x + rotation[7] * p.y + rotation[8] * p.z};
  }
  Vec3 rotate_inv(const Vec3& p) const {  // R^T p
    return {rotation[0] * p.x + rotation[3] * p.y + rotation[6] * p.z,
            rotation[1] * p.x + rotation[4] * p.y + rotation[7] * p.z,
            rotation[2] * p.x + rotation[5] * p.y + rotation[8] * p.z};
  }
  Vec3 to_world(const Vec3& cam) const { return rotate(cam) + translation; }
  Vec3 to_camera(const Vec3& world) const {
    return rotate_inv(world - translation);
  }

  void validate(double tol = 1e-6) const;  // orthonormal, det +1
};

struct RgbdFrame {
  std::vector<double> rgb;    // H*W*3 in [0,1], row-major pixels
  std::vector<double> depth;  // H*W meters, 0 = invalid
  CameraIntrinsics intrinsics;
  Pose pose;
  int frame_id = 0;

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }

  void validate() const;
};

// Depth pixels lifted to world points. If more than max_points pixels carry
// valid depth, a uniform random subset of exactly max_points is kept. The
// surviving pixels' flat indices (v*W+u, ascending) are written to
// pixel_indices when given; per_pixel_features must be H*W*feature_dim.
PointCloud unproject(const RgbdFrame& frame, int max_points, Rng& rng,
                     const std::vector<double>* per_pixel_features = nullptr,
                     int feature_dim = 0,
                     std::vector<int>* pixel_indices = nullptr);

struct ProjectedPixel {
  double u = 0, v = 0, depth = 0;
};

// Inverse of the unprojection map; nullopt when behind the camera or outside
// the image bounds.
std::optional<ProjectedPixel> project(const Vec3& world,
                                      const RgbdFrame& frame);

// Immutable spatial index over a fixed point set. Queries are tie-stable:
// equal distances resolve to the lowest point index, matching exhaustive
// search exactly.
class KdTree {
 public:
  explicit KdTree(const std::vector<double>& positions);  // 3N interleaved

  size_t size() const { return count_; }

  // k nearest neighbors, ascending (distance, index)
  void knn(const Vec3& query, int k, std::vector<int>& indices,
           std::vector<double>& sq_dists) const;

  int nearest(const Vec3& query, double* sq_dist = nullptr) const;

  // all indices with distance <= radius, ascending index order
  void radius(const Vec3& query, double r, std::vector<int>& out) const;

 private:
  struct Node {
    int axis = -1;   // -1 marks a leaf
    int begin = 0, end = 0;
    double split = 0;
    int left = -1, right = -1;
  };

  int build(int begin, int end);
  template <typename Visit>
  void walk(int node, const Vec3& q, double& prune_d2, Visit&& visit) const;

  std::vector<double> pts_;  // copied, 3N
  std::vector<int> order_;   // point indices grouped by leaf
  std::vector<Node> nodes_;
  size_t count_ = 0;
  int root_ = -1;
};

// For each query row (M x 3), the k nearest reference points by squared
// Euclidean distance, ascending, ties to the lowest reference index.
void knn(const std::vector<double>& queries, const PointCloud& reference,
         int k, std::vector<int>& indices, std::vector<double>& sq_dists);

// Greedy max-min sampling of m point indices starting from `start`.
std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m,
                                         int start);

// For each centroid row (M x 3), up to max_samples indices within radius in
// ascending index order, padded by repeating the first entry; if the ball is
// empty the globally nearest point fills every slot.
std::vector<int> ball_query(const std::vector<double>& centroids,
                            const PointCloud& cloud, double radius,
                            int max_samples);

}  // namespace pointfuse
