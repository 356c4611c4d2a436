#pragma once

#include <string>

namespace warp4d {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Parses "error" / "info" / "debug"; anything else is a DomainError.
LogLevel parse_log_level(const std::string& s);

// Threshold from the WARP4D_LOG environment variable, read once.
// Unset defaults to Info; an invalid value throws on first use.
LogLevel log_level();

bool log_enabled(LogLevel level);

// Writes "[warp4d] <level>: <msg>" to stderr when the level is enabled.
void log_msg(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log_msg(LogLevel::Error, msg); }
inline void log_info(const std::string& msg) { log_msg(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log_msg(LogLevel::Debug, msg); }

}  // namespace warp4d
