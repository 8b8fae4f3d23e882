#include "pointfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pointfuse/errors.hpp"

namespace pointfuse {

void PointCloud::validate() const {
  if (positions.size() % 3 != 0)
    throw ShapeError("PointCloud: positions must be a multiple of 3");
  for (double v : positions)
    if (!std::isfinite(v))
      throw ValidationError("PointCloud: non-finite position");
  const size_t n = size();
  if (feature_dim < 0) throw ShapeError("PointCloud: negative feature_dim");
  if (feature_dim > 0 && features.size() != n * static_cast<size_t>(feature_dim))
    throw ShapeError("PointCloud: features row count != N");
  if (feature_dim == 0 && !features.empty())
    throw ShapeError("PointCloud: features present but feature_dim == 0");
  if (!labels.empty() && labels.size() != n)
    throw ShapeError("PointCloud: labels row count != N");
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw ValidationError("CameraIntrinsics: focal lengths must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw ValidationError("CameraIntrinsics: principal point outside image");
}

void Pose::validate(double tol) const {
  // R R^T = I
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += rotation[3 * i + k] * rotation[3 * j + k];
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(dot - expect) > tol)
        throw ValidationError("Pose: rotation is not orthonormal");
    }
  const double det =
      rotation[0] * (rotation[4] * rotation[8] - rotation[5] * rotation[7]) -
      rotation[1] * (rotation[3] * rotation[8] - rotation[5] * rotation[6]) +
      rotation[2] * (rotation[3] * rotation[7] - rotation[4] * rotation[6]);
  if (std::abs(det - 1.0) > tol)
    throw ValidationError("Pose: rotation determinant is not +1");
}

void RgbdFrame::validate() const {
  intrinsics.validate();
  pose.validate();
  const size_t hw = static_cast<size_t>(width()) * height();
  if (depth.size() != hw) throw ShapeError("RgbdFrame: depth size mismatch");
  if (rgb.size() != hw * 3) throw ShapeError("RgbdFrame: rgb size mismatch");
  for (double d : depth)
    if (!(d >= 0)) throw ValidationError("RgbdFrame: negative or NaN depth");
  for (double v : rgb)
    if (!(v >= 0 && v <= 1))
      throw ValidationError("RgbdFrame: rgb outside [0,1]");
}

PointCloud unproject(const RgbdFrame& frame, int max_points, Rng& rng,
                     const std::vector<double>* per_pixel_features,
                     int feature_dim, std::vector<int>* pixel_indices) {
  if (max_points < 1) throw ValidationError("unproject: max_points must be >= 1");
  const int w = frame.width(), h = frame.height();
  const size_t hw = static_cast<size_t>(w) * h;
  if (per_pixel_features) {
    if (feature_dim <= 0)
      throw ShapeError("unproject: per_pixel_features without feature_dim");
    if (per_pixel_features->size() != hw * static_cast<size_t>(feature_dim))
      throw ShapeError("unproject: per_pixel_features size mismatch");
  }

  std::vector<int> valid;
  valid.reserve(hw);
  for (size_t p = 0; p < hw; ++p)
    if (frame.depth[p] > 0) valid.push_back(static_cast<int>(p));

  if (static_cast<int>(valid.size()) > max_points) {
    std::vector<int> pick =
        sample_without_replacement(static_cast<int>(valid.size()), max_points,
                                   rng);
    std::vector<int> kept(pick.size());
    for (size_t i = 0; i < pick.size(); ++i)
      kept[i] = valid[static_cast<size_t>(pick[i])];
    valid = std::move(kept);  // already ascending
  }

  const auto& K = frame.intrinsics;
  PointCloud out;
  out.positions.reserve(valid.size() * 3);
  if (per_pixel_features) {
    out.feature_dim = feature_dim;
    out.features.reserve(valid.size() * static_cast<size_t>(feature_dim));
  }
  for (int p : valid) {
    const int u = p % w, v = p / w;
    const double d = frame.depth[static_cast<size_t>(p)];
    const Vec3 cam{(u - K.cx) * d / K.fx, (v - K.cy) * d / K.fy, d};
    out.push_point(frame.pose.to_world(cam));
    if (per_pixel_features) {
      const double* src =
          per_pixel_features->data() + static_cast<size_t>(p) * feature_dim;
      out.features.insert(out.features.end(), src, src + feature_dim);
    }
  }
  if (pixel_indices) *pixel_indices = std::move(valid);
  return out;
}

std::optional<ProjectedPixel> project(const Vec3& world,
                                      const RgbdFrame& frame) {
  const Vec3 cam = frame.pose.to_camera(world);
  if (cam.z <= 0) return std::nullopt;
  const auto& K = frame.intrinsics;
  const double u = cam.x * K.fx / cam.z + K.cx;
  const double v = cam.y * K.fy / cam.z + K.cy;
  if (u < 0 || u >= K.width || v < 0 || v >= K.height) return std::nullopt;
  return ProjectedPixel{u, v, cam.z};
}

// ---- KdTree -----------------------------------------------------------------

namespace {
constexpr int kLeafSize = 16;
}

KdTree::KdTree(const std::vector<double>& positions) : pts_(positions) {
  if (positions.size() % 3 != 0)
    throw ShapeError("KdTree: positions must be a multiple of 3");
  count_ = positions.size() / 3;
  order_.resize(count_);
  std::iota(order_.begin(), order_.end(), 0);
  if (count_ > 0) root_ = build(0, static_cast<int>(count_));
}

int KdTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  const int n = end - begin;
  if (n <= kLeafSize) {
    // keep leaves in ascending index order so scans are tie-stable
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  // split on the widest axis at the median
  double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
  for (int i = begin; i < end; ++i) {
    const double* p = pts_.data() + 3 * static_cast<size_t>(order_[i]);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  const int mid = begin + n / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int a, int b) {
                     return pts_[3 * static_cast<size_t>(a) + axis] <
                            pts_[3 * static_cast<size_t>(b) + axis];
                   });
  node.axis = axis;
  node.split = pts_[3 * static_cast<size_t>(order_[mid]) + axis];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

namespace {

struct Neighbor {
  double d2;
  int idx;
  // max-heap ordering: the worst candidate (largest distance, then largest
  // index) sits on top
  bool operator<(const Neighbor& o) const {
    if (d2 != o.d2) return d2 < o.d2;
    return idx < o.idx;
  }
};

}  // namespace

template <typename Visit>
void KdTree::walk(int ni, const Vec3& q, double& prune_d2,
                  Visit&& visit) const {
  const Node& node = nodes_[static_cast<size_t>(ni)];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) visit(order_[i]);
    return;
  }
  const double qa = node.axis == 0 ? q.x : node.axis == 1 ? q.y : q.z;
  const double diff = qa - node.split;
  const int near = diff < 0 ? node.left : node.right;
  const int far = diff < 0 ? node.right : node.left;
  walk(near, q, prune_d2, visit);
  // an equal-distance point beyond the plane may still win a tie, so prune
  // only when strictly farther
  if (diff * diff <= prune_d2) walk(far, q, prune_d2, visit);
}

void KdTree::knn(const Vec3& query, int k, std::vector<int>& indices,
                 std::vector<double>& sq_dists) const {
  if (k < 1) throw ValidationError("KdTree::knn: k must be >= 1");
  if (static_cast<size_t>(k) > count_)
    throw SizeError("KdTree::knn: k exceeds point count");
  std::vector<Neighbor> heap;
  heap.reserve(static_cast<size_t>(k));
  double worst = 1e300;
  auto visit = [&](int idx) {
    const double* p = pts_.data() + 3 * static_cast<size_t>(idx);
    const double dx = query.x - p[0], dy = query.y - p[1], dz = query.z - p[2];
    const Neighbor cand{dx * dx + dy * dy + dz * dz, idx};
    if (static_cast<int>(heap.size()) < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end());
    } else if (cand < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end());
    }
    if (static_cast<int>(heap.size()) == k) worst = heap.front().d2;
  };
  walk(root_, query, worst, visit);
  std::sort_heap(heap.begin(), heap.end());
  indices.resize(static_cast<size_t>(k));
  sq_dists.resize(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    indices[static_cast<size_t>(i)] = heap[static_cast<size_t>(i)].idx;
    sq_dists[static_cast<size_t>(i)] = heap[static_cast<size_t>(i)].d2;
  }
}

int KdTree::nearest(const Vec3& query, double* sq_dist) const {
  if (count_ == 0) throw SizeError("KdTree::nearest: empty tree");
  double best_d2 = 1e300;
  int best = -1;
  auto visit = [&](int idx) {
    const double* p = pts_.data() + 3 * static_cast<size_t>(idx);
    const double dx = query.x - p[0], dy = query.y - p[1], dz = query.z - p[2];
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
      best_d2 = d2;
      best = idx;
    }
  };
  walk(root_, query, best_d2, visit);
  if (sq_dist) *sq_dist = best_d2;
  return best;
}

void KdTree::radius(const Vec3& query, double r, std::vector<int>& out) const {
  out.clear();
  if (count_ == 0) return;
  double r2 = r * r;
  auto visit = [&](int idx) {
    const double* p = pts_.data() + 3 * static_cast<size_t>(idx);
    const double dx = query.x - p[0], dy = query.y - p[1], dz = query.z - p[2];
    if (dx * dx + dy * dy + dz * dz <= r2) out.push_back(idx);
  };
  walk(root_, query, r2, visit);
  std::sort(out.begin(), out.end());
}

// ---- free-function operations ---------------------------------------------------

void knn(const std::vector<double>& queries, const PointCloud& reference,
         int k, std::vector<int>& indices, std::vector<double>& sq_dists) {
  if (queries.size() % 3 != 0)
    throw ShapeError("knn: queries must be a multiple of 3");
  if (static_cast<size_t>(k) > reference.size())
    throw SizeError("knn: k exceeds reference point count");
  const size_t m = queries.size() / 3;
  indices.resize(m * static_cast<size_t>(k));
  sq_dists.resize(m * static_cast<size_t>(k));
  KdTree tree(reference.positions);
  std::vector<int> idx;
  std::vector<double> d2;
  for (size_t qi = 0; qi < m; ++qi) {
    const Vec3 q{queries[3 * qi], queries[3 * qi + 1], queries[3 * qi + 2]};
    tree.knn(q, k, idx, d2);
    std::copy(idx.begin(), idx.end(),
              indices.begin() + qi * static_cast<size_t>(k));
    std::copy(d2.begin(), d2.end(),
              sq_dists.begin() + qi * static_cast<size_t>(k));
  }
}

std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m,
                                         int start) {
  const int n = static_cast<int>(cloud.size());
  if (m > n) throw SizeError("farthest_point_sampling: m exceeds point count");
  if (m < 1) throw ValidationError("farthest_point_sampling: m must be >= 1");
  if (start < 0 || start >= n)
    throw SizeError("farthest_point_sampling: start out of range");

  std::vector<int> selected;
  selected.reserve(static_cast<size_t>(m));
  selected.push_back(start);
  std::vector<double> min_d2(static_cast<size_t>(n), 1e300);
  min_d2[static_cast<size_t>(start)] = -1.0;  // never reselected
  int last = start;
  for (int step = 1; step < m; ++step) {
    const Vec3 lp = cloud.point(static_cast<size_t>(last));
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d2 = squared_distance(cloud.point(static_cast<size_t>(i)), lp);
      if (d2 < min_d2[static_cast<size_t>(i)]) min_d2[static_cast<size_t>(i)] = d2;
      if (min_d2[static_cast<size_t>(i)] > best_d2) {  // strict: lowest index wins ties
        best_d2 = min_d2[static_cast<size_t>(i)];
        best = i;
      }
    }
    selected.push_back(best);
    min_d2[static_cast<size_t>(best)] = -1.0;  // never reselected
    last = best;
  }
  return selected;
}

std::vector<int> ball_query(const std::vector<double>& centroids,
                            const PointCloud& cloud, double radius,
                            int max_samples) {
  if (cloud.size() == 0) throw SizeError("ball_query: empty cloud");
  if (!(radius > 0)) throw ValidationError("ball_query: radius must be > 0");
  if (max_samples < 1)
    throw ValidationError("ball_query: max_samples must be >= 1");
  if (centroids.size() % 3 != 0)
    throw ShapeError("ball_query: centroids must be a multiple of 3");

  const size_t m = centroids.size() / 3;
  std::vector<int> out(m * static_cast<size_t>(max_samples));
  KdTree tree(cloud.positions);
  std::vector<int> hits;
  for (size_t ci = 0; ci < m; ++ci) {
    const Vec3 q{centroids[3 * ci], centroids[3 * ci + 1],
                 centroids[3 * ci + 2]};
    tree.radius(q, radius, hits);
    int* row = out.data() + ci * static_cast<size_t>(max_samples);
    if (hits.empty()) {
      const int nn = tree.nearest(q);
      for (int s = 0; s < max_samples; ++s) row[s] = nn;
    } else {
      const int take = std::min<int>(max_samples, static_cast<int>(hits.size()));
      for (int s = 0; s < take; ++s) row[s] = hits[static_cast<size_t>(s)];
      for (int s = take; s < max_samples; ++s) row[s] = hits[0];
    }
  }
  return out;
}

}  // namespace pointfuse
