#pragma once

namespace greeks {

inline constexpr const char* kVersion = "0.1.0";

} // namespace greeks
