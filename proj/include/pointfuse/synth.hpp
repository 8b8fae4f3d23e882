#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pointfuse/geometry.hpp"

namespace pointfuse {

// Everything in a scene is one of three exactly-intersectable primitives.
// Boxes may be degenerate (zero extent along one axis) which models the
// floor and walls as rectangles.
struct SceneObject {
  enum class Kind { Box, Sphere, Cylinder };
  Kind kind = Kind::Box;
  int class_id = 0;
  Vec3 color;

  Vec3 bmin, bmax;        // box
  Vec3 center;            // sphere / cylinder
  double radius = 0;      // sphere / cylinder
  double half_height = 0; // cylinder, z-aligned
};

struct RayHit {
  double t = 0;       // hit = origin + t * dir
  int object = -1;
  Vec3 normal;        // unit, facing against the ray for flat surfaces
};

// Closest hit with t > 1e-9 across all objects; ties keep the lowest object
// index. dir need not be unit length (depth rendering relies on that).
std::optional<RayHit> ray_cast(const std::vector<SceneObject>& objects,
                               const Vec3& origin, const Vec3& dir);

// Exact distance from p to the object's surface.
double surface_distance(const SceneObject& obj, const Vec3& p);
double surface_area(const SceneObject& obj);

struct SceneSpec {
  uint64_t seed = 0;
  double room_x = 4.0, room_y = 4.0, room_z = 2.2;
  int num_boxes = 3, num_spheres = 3, num_twins = 4;
  int frame_count = 20;
  int width = 40, height = 30;
  int num_points = 20000;
  double color_noise = 0.05;

  void validate() const;
};

// class ids used by the generator
enum SynthClass : int {
  kClassFloor = 0,
  kClassWall = 1,
  kClassBox = 2,
  kClassSphere = 3,
  kClassTwinA = 4,
  kClassTwinB = 5,
  kNumSynthClasses = 6,
};
const std::vector<std::string>& synth_class_names();

struct Scene {
  std::string name;
  PointCloud cloud;  // features = shaded RGB, labels = class ids
  std::vector<RgbdFrame> frames;
  std::vector<std::vector<uint16_t>> labels2d;  // per frame H*W, 65535 = no hit
  std::vector<SceneObject> objects;
  int num_classes = kNumSynthClasses;
};

// Deterministic per seed: same spec -> bitwise-identical scene.
Scene generate_scene(const SceneSpec& spec, const std::string& name);

constexpr uint16_t kInvalidLabel2d = 65535;

}  // namespace pointfuse
