#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "drofs/errors.hpp"

namespace drofs {

// Shortest decimal string that round-trips back to the same double. Shared by
// every CSV and JSON writer so exported numbers are byte-stable.
inline std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("failed to format value");
  return std::string(buf, ptr);
}

}  // namespace drofs
