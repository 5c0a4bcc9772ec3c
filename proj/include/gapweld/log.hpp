#pragma once

#include <string>

namespace gapweld {

// Verbosity from GAPWELD_LOG: "quiet", "warn" (default), "info", "debug". Output goes to stderr.
void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace gapweld
