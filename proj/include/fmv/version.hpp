#pragma once

namespace fmv {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fmv
