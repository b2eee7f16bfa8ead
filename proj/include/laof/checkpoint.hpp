#pragma once

#include <map>
#include <string>

#include "laof/tensor.hpp"

namespace laof {

/// Named model parameters, ordered by name so serialization is byte-stable.
using ParamMap = std::map<std::string, Tensor>;

/// Binary checkpoint layout (little-endian):
///   magic "LAOF" | version u32 | param count u64 |
///   per param: name length u16, name bytes, rank u8, extents u32 x rank,
///              float32 data
void save_checkpoint(const std::string& path, const ParamMap& params);

/// Loads a checkpoint written by save_checkpoint. Throws FormatError on a bad
/// magic or unsupported version and CorruptionError on truncated or
/// inconsistent payloads.
ParamMap load_checkpoint(const std::string& path);

}  // namespace laof
