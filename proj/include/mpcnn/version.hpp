#pragma once

namespace mpcnn {

inline constexpr const char* kToolName = "mpcnn";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace mpcnn
