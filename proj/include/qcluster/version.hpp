#pragma once

namespace qcluster {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qcluster
