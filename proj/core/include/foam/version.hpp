#pragma once

namespace foam {

inline constexpr const char* kVersionString = "foam-0.1.0";
inline constexpr int kManifestFormat = 1;

} // namespace foam
