#pragma once

namespace imgconf {
inline constexpr const char* kVersion = "0.1.0";
}
