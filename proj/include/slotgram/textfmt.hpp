#pragma once

#include <cstdio>
#include <string>

namespace slotgram {

// 17 significant digits: enough for an exact double round trip through text.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Display formatting for probabilities (six significant digits, "1.0" when
// the mass is exactly one).
inline std::string fmt_prob(double v) {
  if (v == 1.0) return "1.0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace slotgram
