#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace m2rec::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

Level threshold();
void set_threshold(Level level);
void write(Level level, const std::string& message);

namespace detail {
template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

template <typename... Args>
void info(const Args&... args) {
  if (threshold() <= Level::kInfo) write(Level::kInfo, detail::concat(args...));
}

template <typename... Args>
void warn(const Args&... args) {
  if (threshold() <= Level::kWarn) write(Level::kWarn, detail::concat(args...));
}

template <typename... Args>
void debug(const Args&... args) {
  if (threshold() <= Level::kDebug) write(Level::kDebug, detail::concat(args...));
}

}  // namespace m2rec::log
