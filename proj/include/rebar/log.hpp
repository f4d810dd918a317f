#pragma once

#include <functional>
#include <string>

namespace rebar {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink and returns the previous one. The default
/// sink writes warnings to stderr and drops info messages unless verbose.
LogSink set_log_sink(LogSink sink);
void set_verbose(bool verbose);

void log_info(const std::string& msg);
void log_warning(const std::string& msg);

}  // namespace rebar
