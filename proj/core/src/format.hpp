#pragma once

#include <cstdio>
#include <string>

namespace snmpc::detail {

// Shortest round-trip representation; keeps CSV output byte-stable.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace snmpc::detail
