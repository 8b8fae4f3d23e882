#include "pointfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pointfuse/errors.hpp"

namespace pointfuse {

namespace {

constexpr double kRayEps = 1e-9;

std::optional<RayHit> ray_box(const SceneObject& box, const Vec3& o,
                              const Vec3& d) {
  const double bmin[3] = {box.bmin.x, box.bmin.y, box.bmin.z};
  const double bmax[3] = {box.bmax.x, box.bmax.y, box.bmax.z};
  const double oo[3] = {o.x, o.y, o.z};
  const double dd[3] = {d.x, d.y, d.z};
  double tmin = -1e300, tmax = 1e300;
  int axis_min = -1, axis_max = -1;
  for (int a = 0; a < 3; ++a) {
    if (dd[a] == 0.0) {
      if (oo[a] < bmin[a] || oo[a] > bmax[a]) return std::nullopt;
      continue;
    }
    double t0 = (bmin[a] - oo[a]) / dd[a];
    double t1 = (bmax[a] - oo[a]) / dd[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis_min = a;
    }
    if (t1 < tmax) {
      tmax = t1;
      axis_max = a;
    }
  }
  if (tmin > tmax) return std::nullopt;
  double t;
  int axis;
  if (tmin > kRayEps) {
    t = tmin;
    axis = axis_min;
  } else if (tmax > kRayEps) {
    t = tmax;
    axis = axis_max;
  } else {
    return std::nullopt;
  }
  if (axis < 0) return std::nullopt;
  RayHit hit;
  hit.t = t;
  // face the ray
  hit.normal = Vec3{};
  const double sign = dd[axis] > 0 ? -1.0 : 1.0;
  if (axis == 0) hit.normal.x = sign;
  if (axis == 1) hit.normal.y = sign;
  if (axis == 2) hit.normal.z = sign;
  return hit;
}

std::optional<RayHit> ray_sphere(const SceneObject& s, const Vec3& o,
                                 const Vec3& d) {
  const Vec3 oc = o - s.center;
  const double a = d.dot(d);
  const double b = oc.dot(d);
  const double c = oc.dot(oc) - s.radius * s.radius;
  const double disc = b * b - a * c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / a;
  if (t <= kRayEps) t = (-b + sq) / a;
  if (t <= kRayEps) return std::nullopt;
  RayHit hit;
  hit.t = t;
  const Vec3 p = o + d * t;
  hit.normal = (p - s.center) * (1.0 / s.radius);
  return hit;
}

std::optional<RayHit> ray_cylinder(const SceneObject& cy, const Vec3& o,
                                   const Vec3& d) {
  const double zlo = cy.center.z - cy.half_height;
  const double zhi = cy.center.z + cy.half_height;
  double best_t = 1e300;
  Vec3 best_n;
  bool found = false;

  // lateral surface
  const double ox = o.x - cy.center.x, oy = o.y - cy.center.y;
  const double a = d.x * d.x + d.y * d.y;
  if (a > 0) {
    const double b = ox * d.x + oy * d.y;
    const double c = ox * ox + oy * oy - cy.radius * cy.radius;
    const double disc = b * b - a * c;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / a, (-b + sq) / a}) {
        if (t <= kRayEps || t >= best_t) continue;
        const double z = o.z + t * d.z;
        if (z < zlo || z > zhi) continue;
        best_t = t;
        const Vec3 p = o + d * t;
        best_n = Vec3{(p.x - cy.center.x) / cy.radius,
                      (p.y - cy.center.y) / cy.radius, 0.0};
        found = true;
      }
    }
  }
  // caps
  if (d.z != 0.0) {
    for (int side = 0; side < 2; ++side) {
      const double zp = side == 0 ? zlo : zhi;
      const double t = (zp - o.z) / d.z;
      if (t <= kRayEps || t >= best_t) continue;
      const double px = o.x + t * d.x - cy.center.x;
      const double py = o.y + t * d.y - cy.center.y;
      if (px * px + py * py > cy.radius * cy.radius) continue;
      best_t = t;
      best_n = Vec3{0, 0, side == 0 ? -1.0 : 1.0};
      found = true;
    }
  }
  if (!found) return std::nullopt;
  RayHit hit;
  hit.t = best_t;
  hit.normal = best_n;
  return hit;
}

double box_surface_distance(const SceneObject& box, const Vec3& p) {
  const double qx = std::max({box.bmin.x - p.x, 0.0, p.x - box.bmax.x});
  const double qy = std::max({box.bmin.y - p.y, 0.0, p.y - box.bmax.y});
  const double qz = std::max({box.bmin.z - p.z, 0.0, p.z - box.bmax.z});
  const double outside = std::sqrt(qx * qx + qy * qy + qz * qz);
  if (outside > 0) return outside;
  // inside: distance to the nearest face
  const double ix = std::min(p.x - box.bmin.x, box.bmax.x - p.x);
  const double iy = std::min(p.y - box.bmin.y, box.bmax.y - p.y);
  const double iz = std::min(p.z - box.bmin.z, box.bmax.z - p.z);
  return std::min({ix, iy, iz});
}

}  // namespace

std::optional<RayHit> ray_cast(const std::vector<SceneObject>& objects,
                               const Vec3& origin, const Vec3& dir) {
  std::optional<RayHit> best;
  for (size_t i = 0; i < objects.size(); ++i) {
    const SceneObject& obj = objects[i];
    std::optional<RayHit> h;
    switch (obj.kind) {
      case SceneObject::Kind::Box: h = ray_box(obj, origin, dir); break;
      case SceneObject::Kind::Sphere: h = ray_sphere(obj, origin, dir); break;
      case SceneObject::Kind::Cylinder: h = ray_cylinder(obj, origin, dir); break;
    }
    if (!h) continue;
    if (!best || h->t < best->t) {
      best = *h;
      best->object = static_cast<int>(i);
    }
  }
  return best;
}

double surface_distance(const SceneObject& obj, const Vec3& p) {
  switch (obj.kind) {
    case SceneObject::Kind::Box:
      return box_surface_distance(obj, p);
    case SceneObject::Kind::Sphere:
      return std::abs((p - obj.center).norm() - obj.radius);
    case SceneObject::Kind::Cylinder: {
      const double dr = std::hypot(p.x - obj.center.x, p.y - obj.center.y) -
                        obj.radius;
      const double dz = std::abs(p.z - obj.center.z) - obj.half_height;
      const double ox = std::max(dr, 0.0), oz = std::max(dz, 0.0);
      const double outside = std::sqrt(ox * ox + oz * oz);
      if (outside > 0) return outside;
      return -std::max(dr, dz);
    }
  }
  return 0;
}

double surface_area(const SceneObject& obj) {
  switch (obj.kind) {
    case SceneObject::Kind::Box: {
      const double ex = obj.bmax.x - obj.bmin.x;
      const double ey = obj.bmax.y - obj.bmin.y;
      const double ez = obj.bmax.z - obj.bmin.z;
      // a zero-extent axis collapses its face pair into a single rectangle
      const double fx = ey * ez * (ex == 0 ? 1 : 2);
      const double fy = ex * ez * (ey == 0 ? 1 : 2);
      const double fz = ex * ey * (ez == 0 ? 1 : 2);
      return fx + fy + fz;
    }
    case SceneObject::Kind::Sphere:
      return 4.0 * std::numbers::pi * obj.radius * obj.radius;
    case SceneObject::Kind::Cylinder:
      return 2.0 * std::numbers::pi * obj.radius *
                 (2.0 * obj.half_height) +
             2.0 * std::numbers::pi * obj.radius * obj.radius;
  }
  return 0;
}

void SceneSpec::validate() const {
  if (room_x <= 1.0 || room_y <= 1.0 || room_z <= 0.5)
    throw ValidationError("SceneSpec: room too small");
  if (frame_count < 1 || num_points < 1 || width < 8 || height < 8)
    throw ValidationError("SceneSpec: degenerate counts");
  if (num_boxes < 0 || num_spheres < 0 || num_twins < 2)
    throw ValidationError("SceneSpec: need at least two twin objects");
  if (color_noise < 0 || color_noise > 0.2)
    throw ValidationError("SceneSpec: color_noise out of range");
}

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = {"floor", "wall",   "box",
                                                 "sphere", "twin_a", "twin_b"};
  return names;
}

namespace {

Vec3 clamp01(const Vec3& c) {
  return {std::clamp(c.x, 0.0, 1.0), std::clamp(c.y, 0.0, 1.0),
          std::clamp(c.z, 0.0, 1.0)};
}

// flat Lambert shading plus hashed per-sample noise (order-independent)
Vec3 shade(const Vec3& base, const Vec3& normal, const Vec3& light_dir,
           double noise_amp, uint64_t noise_key) {
  const double lambert = std::max(0.0, normal.dot(light_dir * -1.0));
  const double s = 0.35 + 0.65 * lambert;
  Vec3 c = base * s;
  for (int ch = 0; ch < 3; ++ch) {
    const double u =
        static_cast<double>(split_mix(noise_key + static_cast<uint64_t>(ch)) >>
                            11) *
        0x1.0p-53;
    const double n = noise_amp * (2.0 * u - 1.0);
    if (ch == 0) c.x += n;
    if (ch == 1) c.y += n;
    if (ch == 2) c.z += n;
  }
  return clamp01(c);
}

// A sampleable surface patch: rectangle, sphere, tube or disk.
struct Patch {
  enum class Kind { Rect, Sphere, Tube, Disk } kind;
  int object = 0;
  double area = 0;
  // rect: origin + u*eu + v*ev, fixed normal
  Vec3 origin, eu, ev, normal;
  // sphere/tube/disk geometry comes from the object itself
};

void add_box_patches(const std::vector<SceneObject>& objects, int oi,
                     const Vec3& room_center, std::vector<Patch>& patches) {
  const SceneObject& b = objects[static_cast<size_t>(oi)];
  const Vec3 ext = b.bmax - b.bmin;
  const double e[3] = {ext.x, ext.y, ext.z};
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    const double eu = e[u], ev = e[v];
    if (eu == 0 || ev == 0) continue;  // degenerate sides have no area
    const double area = eu * ev;
    const int sides = e[axis] == 0 ? 1 : 2;
    for (int s = 0; s < sides; ++s) {
      Patch p;
      p.kind = Patch::Kind::Rect;
      p.object = oi;
      p.area = area;
      double base[3] = {b.bmin.x, b.bmin.y, b.bmin.z};
      if (s == 1) base[axis] = axis == 0 ? b.bmax.x : axis == 1 ? b.bmax.y : b.bmax.z;
      p.origin = {base[0], base[1], base[2]};
      double euv[3] = {0, 0, 0}, evv[3] = {0, 0, 0};
      euv[u] = eu;
      evv[v] = ev;
      p.eu = {euv[0], euv[1], euv[2]};
      p.ev = {evv[0], evv[1], evv[2]};
      double n[3] = {0, 0, 0};
      if (e[axis] == 0) {
        // rectangle: face the room interior
        const double plane = base[axis];
        const double center_a =
            axis == 0 ? room_center.x : axis == 1 ? room_center.y : room_center.z;
        n[axis] = center_a > plane ? 1.0 : -1.0;
      } else {
        n[axis] = s == 1 ? 1.0 : -1.0;
      }
      p.normal = {n[0], n[1], n[2]};
      patches.push_back(p);
    }
  }
}

// camera convention: x right, y down, z forward; world up is +z
Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 fwd = (target - eye).normalized();
  const Vec3 up{0, 0, 1};
  Vec3 right = fwd.cross(up);
  const double rn = right.norm();
  if (rn < 1e-9) throw ValidationError("look_at: forward parallel to up");
  right = right * (1.0 / rn);
  const Vec3 down = fwd.cross(right);  // unit by construction
  Pose pose;
  // columns are the camera axes expressed in world coordinates
  pose.rotation[0] = right.x; pose.rotation[1] = down.x; pose.rotation[2] = fwd.x;
  pose.rotation[3] = right.y; pose.rotation[4] = down.y; pose.rotation[5] = fwd.y;
  pose.rotation[6] = right.z; pose.rotation[7] = down.z; pose.rotation[8] = fwd.z;
  pose.translation = eye;
  return pose;
}

constexpr uint64_t kPointNoiseTag = 0x706f696e74ULL;  // per-point color noise
constexpr uint64_t kPixelNoiseTag = 0x706978656cULL;  // per-pixel color noise

}  // namespace

Scene generate_scene(const SceneSpec& spec, const std::string& name) {
  spec.validate();
  Rng rng(spec.seed);
  Scene scene;
  scene.name = name;
  scene.num_classes = kNumSynthClasses;

  const Vec3 room_center{spec.room_x / 2, spec.room_y / 2, spec.room_z / 2};

  // floor and walls as rectangles (degenerate boxes)
  auto add_rect_box = [&](const Vec3& lo, const Vec3& hi, int cls,
                          const Vec3& color) {
    SceneObject o;
    o.kind = SceneObject::Kind::Box;
    o.class_id = cls;
    o.color = color;
    o.bmin = lo;
    o.bmax = hi;
    scene.objects.push_back(o);
  };
  add_rect_box({0, 0, 0}, {spec.room_x, spec.room_y, 0}, kClassFloor,
               {0.46, 0.45, 0.44});
  const Vec3 wall_color{0.75, 0.73, 0.66};
  add_rect_box({0, 0, 0}, {0, spec.room_y, spec.room_z}, kClassWall, wall_color);
  add_rect_box({spec.room_x, 0, 0}, {spec.room_x, spec.room_y, spec.room_z},
               kClassWall, wall_color);
  add_rect_box({0, 0, 0}, {spec.room_x, 0, spec.room_z}, kClassWall, wall_color);
  add_rect_box({0, spec.room_y, 0}, {spec.room_x, spec.room_y, spec.room_z},
               kClassWall, wall_color);

  // movable objects; rejection placement on xy footprint circles
  struct Placed {
    double x, y, r;
  };
  std::vector<Placed> placed;
  const double margin = 0.45;
  auto place = [&](double foot_r) -> std::optional<Vec3> {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double x = rng.uniform(margin + foot_r, spec.room_x - margin - foot_r);
      const double y = rng.uniform(margin + foot_r, spec.room_y - margin - foot_r);
      bool ok = true;
      for (const Placed& q : placed)
        if (std::hypot(x - q.x, y - q.y) < foot_r + q.r + 0.08) {
          ok = false;
          break;
        }
      if (ok) {
        placed.push_back({x, y, foot_r});
        return Vec3{x, y, 0};
      }
    }
    return std::nullopt;
  };

  for (int i = 0; i < spec.num_boxes; ++i) {
    const double hx = rng.uniform(0.12, 0.30), hy = rng.uniform(0.12, 0.30);
    const double hz = rng.uniform(0.10, 0.42);
    const auto pos = place(std::hypot(hx, hy));
    if (!pos) continue;
    SceneObject o;
    o.kind = SceneObject::Kind::Box;
    o.class_id = kClassBox;
    o.color = clamp01(Vec3{0.82 + rng.uniform(-0.1, 0.1),
                           0.52 + rng.uniform(-0.1, 0.1),
                           0.16 + rng.uniform(-0.1, 0.1)});
    o.bmin = {pos->x - hx, pos->y - hy, 0};
    o.bmax = {pos->x + hx, pos->y + hy, 2 * hz};
    scene.objects.push_back(o);
  }
  for (int i = 0; i < spec.num_spheres; ++i) {
    const double r = rng.uniform(0.13, 0.30);
    const auto pos = place(r);
    if (!pos) continue;
    SceneObject o;
    o.kind = SceneObject::Kind::Sphere;
    o.class_id = kClassSphere;
    o.color = clamp01(Vec3{0.18 + rng.uniform(-0.06, 0.06),
                           0.68 + rng.uniform(-0.1, 0.1),
                           0.26 + rng.uniform(-0.06, 0.06)});
    o.center = {pos->x, pos->y, r};
    o.radius = r;
    scene.objects.push_back(o);
  }
  // twins: identical shape distribution, classes assigned by shuffled halves
  std::vector<int> twin_classes;
  for (int i = 0; i < spec.num_twins; ++i)
    twin_classes.push_back(i % 2 == 0 ? kClassTwinA : kClassTwinB);
  shuffle(twin_classes, rng);
  for (int i = 0; i < spec.num_twins; ++i) {
    const double r = rng.uniform(0.11, 0.22);
    const double h = rng.uniform(0.16, 0.40);
    const auto pos = place(r);
    if (!pos) continue;
    SceneObject o;
    o.kind = SceneObject::Kind::Cylinder;
    o.class_id = twin_classes[static_cast<size_t>(i)];
    o.color = o.class_id == kClassTwinA
                  ? clamp01(Vec3{0.84 + rng.uniform(-0.04, 0.04),
                                 0.13 + rng.uniform(-0.04, 0.04),
                                 0.13 + rng.uniform(-0.04, 0.04)})
                  : clamp01(Vec3{0.13 + rng.uniform(-0.04, 0.04),
                                 0.22 + rng.uniform(-0.04, 0.04),
                                 0.84 + rng.uniform(-0.04, 0.04)});
    o.center = {pos->x, pos->y, h};
    o.radius = r;
    o.half_height = h;
    scene.objects.push_back(o);
  }

  // one light per scene, pointing downward with a lateral component
  const double la = rng.uniform(0, 2 * std::numbers::pi);
  const Vec3 light_dir =
      Vec3{0.55 * std::cos(la), 0.55 * std::sin(la), -1.0}.normalized();

  // surface patches for area-uniform point sampling
  std::vector<Patch> patches;
  for (size_t oi = 0; oi < scene.objects.size(); ++oi) {
    const SceneObject& o = scene.objects[oi];
    switch (o.kind) {
      case SceneObject::Kind::Box:
        add_box_patches(scene.objects, static_cast<int>(oi), room_center,
                        patches);
        break;
      case SceneObject::Kind::Sphere: {
        Patch p;
        p.kind = Patch::Kind::Sphere;
        p.object = static_cast<int>(oi);
        p.area = surface_area(o);
        patches.push_back(p);
        break;
      }
      case SceneObject::Kind::Cylinder: {
        Patch side;
        side.kind = Patch::Kind::Tube;
        side.object = static_cast<int>(oi);
        side.area = 2.0 * std::numbers::pi * o.radius * 2.0 * o.half_height;
        patches.push_back(side);
        for (int cap = 0; cap < 2; ++cap) {
          Patch d;
          d.kind = Patch::Kind::Disk;
          d.object = static_cast<int>(oi);
          d.area = std::numbers::pi * o.radius * o.radius;
          d.normal = {0, 0, cap == 0 ? -1.0 : 1.0};
          patches.push_back(d);
        }
        break;
      }
    }
  }
  std::vector<double> cum(patches.size());
  double total = 0;
  for (size_t i = 0; i < patches.size(); ++i) {
    total += patches[i].area;
    cum[i] = total;
  }

  scene.cloud.feature_dim = 3;
  scene.cloud.positions.reserve(static_cast<size_t>(spec.num_points) * 3);
  scene.cloud.features.reserve(static_cast<size_t>(spec.num_points) * 3);
  scene.cloud.labels.reserve(static_cast<size_t>(spec.num_points));
  for (int i = 0; i < spec.num_points; ++i) {
    const double u = rng.uniform() * total;
    const size_t pi = static_cast<size_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const Patch& patch = patches[std::min(pi, patches.size() - 1)];
    const SceneObject& obj = scene.objects[static_cast<size_t>(patch.object)];
    Vec3 p, n;
    switch (patch.kind) {
      case Patch::Kind::Rect: {
        p = patch.origin + patch.eu * rng.uniform() + patch.ev * rng.uniform();
        n = patch.normal;
        break;
      }
      case Patch::Kind::Sphere: {
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0, 2 * std::numbers::pi);
        const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
        n = {rr * std::cos(phi), rr * std::sin(phi), z};
        p = obj.center + n * obj.radius;
        break;
      }
      case Patch::Kind::Tube: {
        const double phi = rng.uniform(0, 2 * std::numbers::pi);
        const double z = rng.uniform(-obj.half_height, obj.half_height);
        n = {std::cos(phi), std::sin(phi), 0};
        p = {obj.center.x + obj.radius * n.x, obj.center.y + obj.radius * n.y,
             obj.center.z + z};
        break;
      }
      case Patch::Kind::Disk: {
        const double rr = obj.radius * std::sqrt(rng.uniform());
        const double phi = rng.uniform(0, 2 * std::numbers::pi);
        n = patch.normal;
        p = {obj.center.x + rr * std::cos(phi),
             obj.center.y + rr * std::sin(phi),
             obj.center.z + patch.normal.z * obj.half_height};
        break;
      }
    }
    scene.cloud.push_point(p);
    const Vec3 c = shade(obj.color, n, light_dir, spec.color_noise,
                         mix_seed(spec.seed, kPointNoiseTag,
                                  static_cast<uint64_t>(i)));
    scene.cloud.features.insert(scene.cloud.features.end(), {c.x, c.y, c.z});
    scene.cloud.labels.push_back(obj.class_id);
  }

  // orbit trajectory with jitter
  CameraIntrinsics K;
  K.width = spec.width;
  K.height = spec.height;
  K.fx = K.fy = 0.96 * spec.width;
  K.cx = (spec.width - 1) / 2.0;
  K.cy = (spec.height - 1) / 2.0;
  const double orbit_r = 0.42 * std::min(spec.room_x, spec.room_y);
  for (int f = 0; f < spec.frame_count; ++f) {
    const double th = 2 * std::numbers::pi * f / spec.frame_count +
                      rng.uniform(-0.12, 0.12);
    const Vec3 eye{room_center.x + orbit_r * std::cos(th),
                   room_center.y + orbit_r * std::sin(th),
                   rng.uniform(1.15, 1.6)};
    const Vec3 target{room_center.x + rng.uniform(-0.8, 0.8),
                      room_center.y + rng.uniform(-0.8, 0.8),
                      rng.uniform(0.1, 0.5)};
    RgbdFrame frame;
    frame.frame_id = f;
    frame.intrinsics = K;
    frame.pose = look_at(eye, target);
    frame.rgb.assign(static_cast<size_t>(spec.width) * spec.height * 3, 0.0);
    frame.depth.assign(static_cast<size_t>(spec.width) * spec.height, 0.0);
    std::vector<uint16_t> label2d(
        static_cast<size_t>(spec.width) * spec.height, kInvalidLabel2d);
    for (int v = 0; v < spec.height; ++v) {
      for (int u = 0; u < spec.width; ++u) {
        // camera-frame z fixed to 1 so the hit parameter is the depth
        const Vec3 dir_cam{(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0};
        const Vec3 dir = frame.pose.rotate(dir_cam);
        const auto hit = ray_cast(scene.objects, eye, dir);
        const size_t pix = static_cast<size_t>(v) * spec.width + u;
        if (!hit) continue;
        frame.depth[pix] = hit->t;
        const SceneObject& obj =
            scene.objects[static_cast<size_t>(hit->object)];
        const Vec3 c = shade(obj.color, hit->normal, light_dir,
                             spec.color_noise,
                             mix_seed(spec.seed, kPixelNoiseTag,
                                      static_cast<uint64_t>(f),
                                      static_cast<uint64_t>(pix)));
        frame.rgb[3 * pix] = c.x;
        frame.rgb[3 * pix + 1] = c.y;
        frame.rgb[3 * pix + 2] = c.z;
        label2d[pix] = static_cast<uint16_t>(obj.class_id);
      }
    }
    scene.frames.push_back(std::move(frame));
    scene.labels2d.push_back(std::move(label2d));
  }
  return scene;
}

}  // namespace pointfuse
