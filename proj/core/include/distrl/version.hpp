#pragma once

namespace distrl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace distrl
