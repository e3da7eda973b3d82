#include "m2rec/log.hpp"

#include <atomic>
#include <mutex>

namespace m2rec::log {
namespace {
std::atomic<Level> g_threshold{Level::kInfo};
std::mutex g_mutex;

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    default: return "";
  }
}
}  // namespace

Level threshold() { return g_threshold.load(std::memory_order_relaxed); }

void set_threshold(Level level) { g_threshold.store(level, std::memory_order_relaxed); }

void write(Level level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::clog << "[m2rec " << tag(level) << "] " << message << '\n';
}

}  // namespace m2rec::log
