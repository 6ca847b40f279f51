#include "glass/log.hpp"

#include <cstdlib>
#include <iostream>

namespace glass {

namespace {
LogLevel g_level = LogLevel::Info;
}

void set_log_level(LogLevel level) { g_level = level; }

LogLevel log_level() { return g_level; }

void init_log_level_from_env() {
    const char* env = std::getenv("GLASS_LOG");
    if (!env) return;
    const std::string v(env);
    if (v == "error") g_level = LogLevel::Error;
    else if (v == "info") g_level = LogLevel::Info;
    else if (v == "debug") g_level = LogLevel::Debug;
}

void log_error(const std::string& msg) {
    std::cerr << "[error] " << msg << "\n";
}

void log_info(const std::string& msg) {
    if (g_level >= LogLevel::Info) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (g_level >= LogLevel::Debug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace glass
