#pragma once

#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace exset {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

namespace detail {

inline LogLevel level_from_env()
{
  const char* env = std::getenv("EXSET_LOG");
  if (env == nullptr) return LogLevel::warn;
  const std::string_view v(env);
  if (v == "debug") return LogLevel::debug;
  if (v == "info") return LogLevel::info;
  if (v == "error") return LogLevel::error;
  if (v == "off") return LogLevel::off;
  return LogLevel::warn;
}

struct LogState
{
  LogLevel level = level_from_env();
  std::function<void(LogLevel, std::string_view)> sink;
  std::mutex mutex;
};

inline LogState& log_state()
{
  static LogState state;
  return state;
}

} // namespace detail

/// Replace the log sink. Passing an empty function restores stderr output.
inline void set_log_sink(std::function<void(LogLevel, std::string_view)> sink)
{
  auto& s = detail::log_state();
  std::lock_guard lock(s.mutex);
  s.sink = std::move(sink);
}

inline void set_log_level(LogLevel level) { detail::log_state().level = level; }

inline void log(LogLevel level, std::string_view message)
{
  auto& s = detail::log_state();
  if (level < s.level) return;
  std::lock_guard lock(s.mutex);
  if (s.sink) {
    s.sink(level, message);
    return;
  }
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  std::clog << "[exset " << names[static_cast<int>(level)] << "] " << message << '\n';
}

inline void log_warn(std::string_view message) { log(LogLevel::warn, message); }
inline void log_info(std::string_view message) { log(LogLevel::info, message); }
inline void log_debug(std::string_view message) { log(LogLevel::debug, message); }

} // namespace exset
