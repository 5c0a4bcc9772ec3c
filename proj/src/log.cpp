#include "gapweld/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string_view>

namespace gapweld {

namespace {

int verbosity() {
  static const int level = [] {
    const char* env = std::getenv("GAPWELD_LOG");
    const std::string_view v = env ? env : "warn";
    if (v == "quiet") return 0;
    if (v == "info") return 2;
    if (v == "debug") return 3;
    return 1;
  }();
  return level;
}

void emit(int level, std::string_view tag, const std::string& msg) {
  if (verbosity() >= level) std::cerr << "[gapweld " << tag << "] " << msg << '\n';
}

}  // namespace

void log_warn(const std::string& msg) { emit(1, "warn", msg); }
void log_info(const std::string& msg) { emit(2, "info", msg); }
void log_debug(const std::string& msg) { emit(3, "debug", msg); }

}  // namespace gapweld
