#pragma once

namespace vnaff {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vnaff
