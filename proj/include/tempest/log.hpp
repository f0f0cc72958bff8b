// Copyright (c) the tempest authors. All rights reserved.
// Licensed under the Apache 2.0 License.

#pragma once

// Leveled stderr logging. The level comes from the TEMPEST_LOG environment
// variable (error, warn, info, debug, trace; default warn) and can be
// overridden programmatically (e.g. by a --log flag).

#include <cstdio>
#include <cstdlib>
#include <string>

namespace tempest {

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3, Trace = 4 };

inline LogLevel parse_log_level(const std::string& s, LogLevel fallback = LogLevel::Warn) {
  if (s == "error") return LogLevel::Error;
  if (s == "warn") return LogLevel::Warn;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  if (s == "trace") return LogLevel::Trace;
  return fallback;
}

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("TEMPEST_LOG");
    return env ? parse_log_level(env) : LogLevel::Warn;
  }();
  return level;
}

inline void set_log_level(LogLevel level) { log_level() = level; }

inline bool log_enabled(LogLevel level) {
  return static_cast<int>(level) <= static_cast<int>(log_level());
}

template <typename... Args>
void log_at(LogLevel level, const char* tag, const char* fmt, Args... args) {
  if (!log_enabled(level)) return;
  std::fprintf(stderr, "[%s] ", tag);
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

#define TEMPEST_LOG_ERROR(...) ::tempest::log_at(::tempest::LogLevel::Error, "error", __VA_ARGS__)
#define TEMPEST_LOG_WARN(...) ::tempest::log_at(::tempest::LogLevel::Warn, "warn", __VA_ARGS__)
#define TEMPEST_LOG_INFO(...) ::tempest::log_at(::tempest::LogLevel::Info, "info", __VA_ARGS__)
#define TEMPEST_LOG_DEBUG(...) ::tempest::log_at(::tempest::LogLevel::Debug, "debug", __VA_ARGS__)
#define TEMPEST_LOG_TRACE(...) ::tempest::log_at(::tempest::LogLevel::Trace, "trace", __VA_ARGS__)

}  // namespace tempest
