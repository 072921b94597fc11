#pragma once

#include <cstdio>
#include <string>

namespace detkit {

// Shortest-ish decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detkit
