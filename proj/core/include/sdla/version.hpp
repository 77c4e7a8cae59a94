#pragma once

namespace sdla {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sdla
