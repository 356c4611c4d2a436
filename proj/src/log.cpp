#include "warp4d/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <optional>

#include "warp4d/errors.hpp"

namespace warp4d {

LogLevel parse_log_level(const std::string& s) {
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    throw DomainError("WARP4D_LOG must be one of error, info, debug (got '" + s + "')");
}

LogLevel log_level() {
    static std::optional<LogLevel> cached;
    if (!cached) {
        const char* env = std::getenv("WARP4D_LOG");
        // Cache the fallback before parsing: reporting a bad value goes
        // through the logger itself, which must not re-throw.
        cached = LogLevel::Info;
        if (env) cached = parse_log_level(env);
    }
    return *cached;
}

bool log_enabled(LogLevel level) {
    return static_cast<int>(level) <= static_cast<int>(log_level());
}

void log_msg(LogLevel level, const std::string& msg) {
    if (!log_enabled(level)) return;
    const char* tag = level == LogLevel::Error ? "error" : level == LogLevel::Info ? "info" : "debug";
    std::fprintf(stderr, "[warp4d] %s: %s\n", tag, msg.c_str());
}

}  // namespace warp4d
