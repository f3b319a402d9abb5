#pragma once

namespace rflow {

inline constexpr const char* kToolkitName = "rflow";
inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace rflow
