#pragma once

namespace cobez {

inline constexpr const char* kVersion = "0.1.0";

}
