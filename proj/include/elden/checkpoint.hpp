#pragma once

#include <string>

#include "elden/optim.hpp"

namespace elden::tc {

// Flat versioned binary layout: magic, format version, tensor count, then
// per tensor: name length, name bytes, rank, dims, little-endian f64 data.
inline constexpr char kCheckpointMagic[8] = {'E', 'L', 'D', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore& store);

// Loads into an existing store; every stored tensor must already exist with
// a matching shape (schema compatibility check).
void load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace elden::tc
