#pragma once

#include <string_view>

namespace ipwfront {

inline constexpr std::string_view kToolName = "ipwfront";
inline constexpr std::string_view kToolVersion = "1.0.0";

} // namespace ipwfront
