#pragma once

namespace gtlab {

inline constexpr const char* version = "0.1.0";

}  // namespace gtlab
