#pragma once

#include <span>
#include <string>
#include <vector>

#include "hvae/tensor.hpp"

// Flat binary tensor container: header (magic "HVAE", format version u32,
// tensor count u32), then per tensor: name length u32 + UTF-8 name,
// rank u32, dims u64 each, values as little-endian 8-byte reals.
// Round-trips bit-exactly. Writes go to a temp name in the target
// directory and are renamed into place only on success.

namespace hvae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, std::span<const Tensor> tensors);

// Returns named trainable tensors in file order. Throws IoError on a
// missing, truncated, or foreign file.
std::vector<Tensor> load_checkpoint(const std::string& path);

}  // namespace hvae
