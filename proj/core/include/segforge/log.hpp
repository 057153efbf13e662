#pragma once

#include <string_view>

namespace segforge {

enum class LogLevel { kSilent = 0, kWarning = 1, kInfo = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace segforge
