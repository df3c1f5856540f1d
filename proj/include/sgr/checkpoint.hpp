#pragma once

#include <string>

#include "sgr/params.hpp"

namespace sgr {

constexpr uint32_t kCheckpointVersion = 1;

/// Binary parameter container. Layout, all little-endian:
///   magic "SGRM", u32 version, u32 entry count, then per entry:
///   u16 name length, name bytes, u8 rank, u32 extents, raw f32 values.
void save_checkpoint(const ParamSet<float>& params, const std::string& path);
ParamSet<float> load_checkpoint(const std::string& path);

}  // namespace sgr
