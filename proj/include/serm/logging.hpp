#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace serm {

inline std::atomic<bool>& warnings_enabled() {
  static std::atomic<bool> enabled{true};
  return enabled;
}

inline void log_warning(std::string_view msg) {
  if (warnings_enabled()) std::clog << "warning: " << msg << '\n';
}

}  // namespace serm
