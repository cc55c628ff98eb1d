#pragma once

#include <cstdint>
#include <string>

#include "coda/params.hpp"

namespace coda {

// Named-slot binary checkpoint: magic "CODACKPT", u32 version, u32 slot
// count; per slot: u32 name length, name bytes, u32 ndim, u64 dims,
// row-major float64 data. Little-endian throughout.
void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

// FNV-1a over the serialized form; used to assert frozen slots stay
// bit-identical.
std::uint64_t checkpoint_digest(const ParamStore& params);

}  // namespace coda
