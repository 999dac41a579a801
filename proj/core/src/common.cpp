#include "l3gs/common.hpp"

#include <cstdio>
#include <cstdlib>

namespace l3gs {

LogLevel log_level() {
  static LogLevel lvl = [] {
    const char* env = std::getenv("L3GS_LOG");
    std::string s = env ? env : "";
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return lvl;
}

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[l3gs:%s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

}  // namespace l3gs
