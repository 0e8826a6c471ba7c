#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace tpoint {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Log threshold, read once from the TP_LOG environment variable
/// (error | info | debug, default error).
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("TP_LOG");
    if (env == nullptr) return LogLevel::error;
    const std::string s(env);
    if (s == "debug") return LogLevel::debug;
    if (s == "info") return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

template <class... Args>
void log_at(LogLevel level, const char* fmt, Args... args) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  const char* tag = level == LogLevel::error ? "error" : level == LogLevel::info ? "info" : "debug";
  std::fprintf(stderr, "[tpoint:%s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fprintf(stderr, "\n");
}

inline void log_at(LogLevel level, const char* msg) { log_at(level, "%s", msg); }

}  // namespace tpoint
