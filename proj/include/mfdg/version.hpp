#pragma once

namespace mfdg {

inline constexpr const char* kEngineVersion = "0.1.0";

}  // namespace mfdg
