#pragma once

#include <filesystem>

#include "semkd/trainer.hpp"

namespace semkd {

/// Magic prefix of every checkpoint file; doubles as the format version.
inline constexpr char kCheckpointMagic[] = "SEMKD1";

/// Single-file archive: magic, little-endian u64 header length, JSON header
/// (config, dims, frozen flags, head, memory, superclasses, tensor shapes),
/// then every parameter tensor as little-endian float64 in visit order.
void save_checkpoint(const std::filesystem::path& path, const RunState& state);
RunState load_checkpoint(const std::filesystem::path& path);

}  // namespace semkd
