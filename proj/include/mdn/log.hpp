#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mdn::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

/// Threshold comes from the MDN_LOG environment variable
/// (debug|info|warn|error); defaults to info.
inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("MDN_LOG");
    if (env == nullptr) return Level::info;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    if (std::strcmp(env, "info") == 0) return Level::info;
    if (std::strcmp(env, "warn") == 0) return Level::warn;
    if (std::strcmp(env, "error") == 0) return Level::error;
    return Level::info;
  }();
  return level;
}

inline void emit(Level level, const char* fmt, std::va_list args) {
  if (level < threshold()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] ", names[static_cast<int>(level)]);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
}

#define MDN_LOG_FN(name, level)                      \
  inline void name(const char* fmt, ...) {           \
    std::va_list args;                               \
    va_start(args, fmt);                             \
    emit(level, fmt, args);                          \
    va_end(args);                                    \
  }

MDN_LOG_FN(debug, Level::debug)
MDN_LOG_FN(info, Level::info)
MDN_LOG_FN(warn, Level::warn)
MDN_LOG_FN(error, Level::error)

#undef MDN_LOG_FN

}  // namespace mdn::log
