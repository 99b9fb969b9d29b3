#pragma once

#include <string>

namespace stimclean {

enum class LogLevel { quiet = 0, warn = 1, info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

// Thread-safe single-line messages on stderr.
void log_warn(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace stimclean
