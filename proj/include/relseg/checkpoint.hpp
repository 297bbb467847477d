#pragma once

#include <filesystem>

#include "relseg/unet.hpp"

namespace relseg {

// Binary little-endian checkpoint: magic "RSEG", u32 format version, the
// model-config text block, a tensor manifest (name, rank, dims), then the
// raw f64 payload. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const UNet& net);
UNet load_checkpoint(const std::filesystem::path& path);

}  // namespace relseg
