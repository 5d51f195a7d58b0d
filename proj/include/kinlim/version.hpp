#pragma once

namespace kinlim {
inline constexpr const char* kVersion = "0.1.0";
}
