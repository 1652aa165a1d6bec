#pragma once

#include <iostream>
#include <string>
#include <string_view>

namespace subtune::logging {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline Level& level() {
  static Level current = Level::kWarn;
  return current;
}

inline void set_level(std::string_view name) {
  if (name == "debug") level() = Level::kDebug;
  else if (name == "info") level() = Level::kInfo;
  else if (name == "warn") level() = Level::kWarn;
  else if (name == "error") level() = Level::kError;
  else if (name == "off") level() = Level::kOff;
  else throw std::invalid_argument("unknown log level: " + std::string(name));
}

inline void log(Level lvl, const std::string& message) {
  if (lvl < level()) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << message << "\n";
}

inline void debug(const std::string& m) { log(Level::kDebug, m); }
inline void info(const std::string& m) { log(Level::kInfo, m); }
inline void warn(const std::string& m) { log(Level::kWarn, m); }
inline void error(const std::string& m) { log(Level::kError, m); }

}  // namespace subtune::logging
