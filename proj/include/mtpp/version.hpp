#pragma once

namespace mtpp {

inline constexpr const char* kVersion = "0.1.0";

}
