#include "pointfuse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "pointfuse/errors.hpp"

namespace pointfuse {

namespace {
constexpr char kMagic[] = "PFCKPT1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const ParamList& entries, int epoch, uint64_t seed) {
  nlohmann::json header;
  header["epoch"] = epoch;
  header["seed"] = seed;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : entries)
    tensors.push_back({{"name", name}, {"shape", t->shape}});
  header["tensors"] = std::move(tensors);
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DependencyError("cannot write " + path.string());
  out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : entries) {
    std::vector<float> buf(t->numel());
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(t->data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

ParamList load_checkpoint(const std::filesystem::path& path, int* epoch,
                          uint64_t* seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("cannot read checkpoint " + path.string());
  char magic[kMagicLen];
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw ValidationError(path.string() + ": not a checkpoint file");
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  const nlohmann::json header = nlohmann::json::parse(hs);
  if (epoch) *epoch = header.at("epoch").get<int>();
  if (seed) *seed = header.at("seed").get<uint64_t>();

  ParamList entries;
  for (const auto& tj : header.at("tensors")) {
    const auto name = tj.at("name").get<std::string>();
    const auto shape = tj.at("shape").get<std::vector<int>>();
    auto t = make_tensor(shape);
    std::vector<float> buf(t->numel());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw ValidationError(path.string() + ": truncated blob data");
    for (size_t i = 0; i < buf.size(); ++i)
      t->data[i] = static_cast<double>(buf[i]);
    entries.emplace_back(name, std::move(t));
  }
  return entries;
}

void apply_checkpoint(const ParamList& loaded, ParamList& dst) {
  std::unordered_map<std::string, const TensorPtr*> by_name;
  for (const auto& [name, t] : loaded) by_name[name] = &t;
  for (auto& [name, t] : dst) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DependencyError("checkpoint is missing tensor '" + name + "'");
    const TensorPtr& src = *it->second;
    if (src->shape != t->shape)
      throw ShapeError("checkpoint tensor '" + name + "' has shape " +
                       src->shape_str() + ", expected " + t->shape_str());
    t->data = src->data;
  }
}

}  // namespace pointfuse
