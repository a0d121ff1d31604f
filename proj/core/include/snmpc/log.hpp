#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace snmpc::log {

enum class Level { off = 0, error = 1, warn = 2, info = 3, debug = 4 };

// Verbosity from UPH_SNMPC_LOG (error|warn|info|debug), default warn.
inline Level level() {
  static const Level lv = [] {
    const char* env = std::getenv("UPH_SNMPC_LOG");
    if (env == nullptr) return Level::warn;
    if (std::strcmp(env, "off") == 0) return Level::off;
    if (std::strcmp(env, "error") == 0) return Level::error;
    if (std::strcmp(env, "warn") == 0) return Level::warn;
    if (std::strcmp(env, "info") == 0) return Level::info;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    return Level::warn;
  }();
  return lv;
}

inline void write(Level lv, const char* tag, const std::string& msg) {
  if (static_cast<int>(lv) <= static_cast<int>(level())) {
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
  }
}

inline void error(const std::string& msg) { write(Level::error, "error", msg); }
inline void warn(const std::string& msg) { write(Level::warn, "warn", msg); }
inline void info(const std::string& msg) { write(Level::info, "info", msg); }
inline void debug(const std::string& msg) { write(Level::debug, "debug", msg); }

}  // namespace snmpc::log
