#pragma once

#include <string>

#include "foam/params.hpp"

namespace foam {

// Binary checkpoint: a format-version integer, a header of (name, shape)
// pairs in canonical parameter order, then the raw little-endian fp32 data of
// each parameter in the same order.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

} // namespace foam
