#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pointfuse/synth.hpp"
#include "pointfuse/viewsel.hpp"

namespace pointfuse {

// On-disk scene directory:
//   points.bin              little-endian f32 xyz triples
//   colors.bin              little-endian f32 rgb triples (optional)
//   labels.bin              little-endian u16 per point, 65535 = unlabeled
//   frames/<id>/rgb.ppm     binary PPM (P6, maxval 255)
//   frames/<id>/depth.f32   row-major little-endian f32 meters, 0 = invalid
//   frames/<id>/camera.json fx fy cx cy width height rotation translation
//   labels2d/<id>.u16       per-pixel class ids (written by the generator)
//   coverage.json           cached frame/point overlap index
void write_scene_dir(const std::filesystem::path& dir, const Scene& scene);
Scene load_scene_dir(const std::filesystem::path& dir);

bool has_coverage_index(const std::filesystem::path& dir);

struct Corpus {
  std::vector<Scene> train, val;
  std::vector<CoverageIndex> train_coverage, val_coverage;
  std::vector<std::string> class_names;
  int num_classes = 0;
  int width = 0, height = 0;
};

// Reads corpus.json plus every scene under train/ and val/. Coverage indexes
// are loaded from cache or built (and not written back).
Corpus load_corpus(const std::filesystem::path& root);

void write_ppm(const std::filesystem::path& path,
               const std::vector<double>& rgb, int width, int height);
std::vector<double> read_ppm(const std::filesystem::path& path, int* width,
                             int* height);

void write_f32_le(const std::filesystem::path& path,
                  const std::vector<double>& values);
std::vector<double> read_f32_le(const std::filesystem::path& path);
void write_u16_le(const std::filesystem::path& path,
                  const std::vector<uint16_t>& values);
std::vector<uint16_t> read_u16_le(const std::filesystem::path& path);

}  // namespace pointfuse
