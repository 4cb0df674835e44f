#include "unlearn/log.hpp"

#include <atomic>
#include <iostream>

namespace unlearn {

namespace {
std::atomic<LogLevel> current{LogLevel::warning};
}

void set_log_level(LogLevel level) { current = level; }
LogLevel log_level() { return current; }

void log(LogLevel level, std::string_view message) {
  if (level < current || level == LogLevel::quiet) return;
  static constexpr const char* names[] = {"debug", "info", "warning", "error"};
  std::clog << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace unlearn
