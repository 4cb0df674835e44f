#pragma once

#include <string_view>

namespace unlearn {

enum class LogLevel { debug, info, warning, error, quiet };

void set_log_level(LogLevel level);
LogLevel log_level();
void log(LogLevel level, std::string_view message);

inline void log_info(std::string_view m) { log(LogLevel::info, m); }
inline void log_warning(std::string_view m) { log(LogLevel::warning, m); }

}  // namespace unlearn
