#pragma once

#include <cstdint>
#include <filesystem>

#include "pointfuse/autodiff.hpp"

namespace pointfuse {

// Single-file checkpoint: magic string, u64 header length, JSON header
// (entry names + shapes, epoch, rng seed), then little-endian f32 blobs in
// header order.
void save_checkpoint(const std::filesystem::path& path,
                     const ParamList& entries, int epoch, uint64_t seed);

ParamList load_checkpoint(const std::filesystem::path& path,
                          int* epoch = nullptr, uint64_t* seed = nullptr);

// Copies loaded values into dst by name; every dst entry must be present with
// a matching shape.
void apply_checkpoint(const ParamList& loaded, ParamList& dst);

}  // namespace pointfuse
