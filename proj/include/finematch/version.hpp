#pragma once

namespace finematch {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace finematch
