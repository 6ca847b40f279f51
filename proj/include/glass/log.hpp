#pragma once

#include <string>

namespace glass {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Global stderr logger. Level comes from GLASS_LOG={error,info,debug},
// default info. Run artifacts (log.jsonl) are written elsewhere; this is
// human-facing progress output only.
void set_log_level(LogLevel level);
void init_log_level_from_env();
LogLevel log_level();

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace glass
