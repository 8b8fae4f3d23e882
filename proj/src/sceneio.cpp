#include "pointfuse/sceneio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pointfuse/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk formats assume a little-endian host");

namespace pointfuse {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DependencyError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("cannot read " + path.string());
  return in;
}

constexpr uint16_t kUnlabeled = 65535;

}  // namespace

void write_f32_le(const fs::path& path, const std::vector<double>& values) {
  auto out = open_out(path);
  std::vector<float> buf(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    buf[i] = static_cast<float>(values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_f32_le(const fs::path& path) {
  auto in = open_in(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  if (bytes % sizeof(float) != 0)
    throw ValidationError(path.string() + ": size not a multiple of 4");
  std::vector<float> buf(bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(bytes));
  return {buf.begin(), buf.end()};
}

void write_u16_le(const fs::path& path, const std::vector<uint16_t>& values) {
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(uint16_t)));
}

std::vector<uint16_t> read_u16_le(const fs::path& path) {
  auto in = open_in(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 2 != 0)
    throw ValidationError(path.string() + ": size not a multiple of 2");
  std::vector<uint16_t> buf(bytes / 2);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(bytes));
  return buf;
}

void write_ppm(const fs::path& path, const std::vector<double>& rgb,
               int width, int height) {
  if (rgb.size() != static_cast<size_t>(width) * height * 3)
    throw ShapeError("write_ppm: rgb size mismatch");
  auto out = open_out(path);
  out << "P6\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> bytes(rgb.size());
  for (size_t i = 0; i < rgb.size(); ++i)
    bytes[i] = static_cast<unsigned char>(
        std::lround(std::clamp(rgb[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_ppm(const fs::path& path, int* width, int* height) {
  auto in = open_in(path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw ValidationError(path.string() + ": not binary PPM");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (maxval != 255)
    throw ValidationError(path.string() + ": expected maxval 255");
  in.get();  // single whitespace after header
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw ValidationError(path.string() + ": truncated pixel data");
  std::vector<double> rgb(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) rgb[i] = bytes[i] / 255.0;
  if (width) *width = w;
  if (height) *height = h;
  return rgb;
}

namespace {

nlohmann::json camera_json(const RgbdFrame& frame) {
  const auto& K = frame.intrinsics;
  nlohmann::json j;
  j["fx"] = K.fx;
  j["fy"] = K.fy;
  j["cx"] = K.cx;
  j["cy"] = K.cy;
  j["width"] = K.width;
  j["height"] = K.height;
  j["rotation"] = std::vector<double>(frame.pose.rotation,
                                      frame.pose.rotation + 9);
  j["translation"] = std::vector<double>{frame.pose.translation.x,
                                         frame.pose.translation.y,
                                         frame.pose.translation.z};
  return j;
}

void parse_camera_json(const fs::path& path, RgbdFrame& frame) {
  auto in = open_in(path);
  nlohmann::json j;
  in >> j;
  auto& K = frame.intrinsics;
  K.fx = j.at("fx").get<double>();
  K.fy = j.at("fy").get<double>();
  K.cx = j.at("cx").get<double>();
  K.cy = j.at("cy").get<double>();
  K.width = j.at("width").get<int>();
  K.height = j.at("height").get<int>();
  const auto rot = j.at("rotation").get<std::vector<double>>();
  if (rot.size() != 9) throw ValidationError("camera.json: rotation != 9");
  std::copy(rot.begin(), rot.end(), frame.pose.rotation);
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (tr.size() != 3) throw ValidationError("camera.json: translation != 3");
  frame.pose.translation = {tr[0], tr[1], tr[2]};
}

}  // namespace

void write_scene_dir(const fs::path& dir, const Scene& scene) {
  fs::create_directories(dir);
  write_f32_le(dir / "points.bin", scene.cloud.positions);
  if (scene.cloud.feature_dim == 3)
    write_f32_le(dir / "colors.bin", scene.cloud.features);
  std::vector<uint16_t> labels(scene.cloud.labels.size());
  for (size_t i = 0; i < labels.size(); ++i)
    labels[i] = scene.cloud.labels[i] < 0
                    ? kUnlabeled
                    : static_cast<uint16_t>(scene.cloud.labels[i]);
  write_u16_le(dir / "labels.bin", labels);

  fs::create_directories(dir / "labels2d");
  for (size_t f = 0; f < scene.frames.size(); ++f) {
    const RgbdFrame& frame = scene.frames[f];
    const fs::path fdir = dir / "frames" / std::to_string(frame.frame_id);
    fs::create_directories(fdir);
    write_ppm(fdir / "rgb.ppm", frame.rgb, frame.width(), frame.height());
    write_f32_le(fdir / "depth.f32", frame.depth);
    auto out = open_out(fdir / "camera.json");
    out << camera_json(frame).dump(2) << "\n";
    if (f < scene.labels2d.size())
      write_u16_le(dir / "labels2d" /
                       (std::to_string(frame.frame_id) + ".u16"),
                   scene.labels2d[f]);
  }
}

Scene load_scene_dir(const fs::path& dir) {
  Scene scene;
  scene.name = dir.filename().string();
  scene.cloud.positions = read_f32_le(dir / "points.bin");
  if (fs::exists(dir / "colors.bin")) {
    scene.cloud.features = read_f32_le(dir / "colors.bin");
    scene.cloud.feature_dim = 3;
  }
  const auto raw_labels = read_u16_le(dir / "labels.bin");
  scene.cloud.labels.resize(raw_labels.size());
  for (size_t i = 0; i < raw_labels.size(); ++i)
    scene.cloud.labels[i] =
        raw_labels[i] == kUnlabeled ? -1 : static_cast<int>(raw_labels[i]);
  scene.cloud.validate();

  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(dir / "frames"))
    ids.push_back(std::stoi(entry.path().filename().string()));
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    const fs::path fdir = dir / "frames" / std::to_string(id);
    RgbdFrame frame;
    frame.frame_id = id;
    parse_camera_json(fdir / "camera.json", frame);
    int w = 0, h = 0;
    frame.rgb = read_ppm(fdir / "rgb.ppm", &w, &h);
    if (w != frame.width() || h != frame.height())
      throw ShapeError(fdir.string() + ": rgb size does not match intrinsics");
    frame.depth = read_f32_le(fdir / "depth.f32");
    frame.validate();
    scene.frames.push_back(std::move(frame));
    const fs::path lpath = dir / "labels2d" / (std::to_string(id) + ".u16");
    if (fs::exists(lpath)) {
      auto l2d = read_u16_le(lpath);
      if (l2d.size() != static_cast<size_t>(w) * h)
        throw ShapeError(lpath.string() + ": label size mismatch");
      scene.labels2d.push_back(std::move(l2d));
    }
  }
  return scene;
}

bool has_coverage_index(const fs::path& dir) {
  return fs::exists(dir / "coverage.json");
}

namespace {

void load_split(const fs::path& root, const std::string& split,
                std::vector<Scene>& scenes,
                std::vector<CoverageIndex>& coverage) {
  const fs::path dir = root / split;
  if (!fs::exists(dir)) return;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    scenes.push_back(load_scene_dir(p));
    if (has_coverage_index(p)) {
      coverage.push_back(load_coverage_index(p / "coverage.json"));
    } else {
      coverage.push_back(
          build_coverage_index(scenes.back().cloud, scenes.back().frames));
    }
  }
}

}  // namespace

Corpus load_corpus(const fs::path& root) {
  auto in = open_in(root / "corpus.json");
  nlohmann::json j;
  in >> j;
  Corpus corpus;
  corpus.class_names = j.at("classes").get<std::vector<std::string>>();
  corpus.num_classes = static_cast<int>(corpus.class_names.size());
  corpus.width = j.at("width").get<int>();
  corpus.height = j.at("height").get<int>();
  load_split(root, "train", corpus.train, corpus.train_coverage);
  load_split(root, "val", corpus.val, corpus.val_coverage);
  if (corpus.train.empty() && corpus.val.empty())
    throw DependencyError("corpus at " + root.string() + " has no scenes");
  for (const Scene& s : corpus.train)
    for (int l : s.cloud.labels)
      if (l >= corpus.num_classes)
        throw ValidationError("corpus label exceeds class count");
  return corpus;
}

}  // namespace pointfuse
