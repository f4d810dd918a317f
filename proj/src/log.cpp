#include "rebar/log.hpp"

#include <iostream>

namespace rebar {

namespace {
bool g_verbose = false;

void default_sink(LogLevel level, const std::string& msg) {
    if (level == LogLevel::warning)
        std::cerr << "warning: " << msg << '\n';
    else if (g_verbose)
        std::cerr << msg << '\n';
}

LogSink& sink() {
    static LogSink s = default_sink;
    return s;
}
}  // namespace

LogSink set_log_sink(LogSink s) {
    LogSink prev = std::move(sink());
    sink() = s ? std::move(s) : LogSink(default_sink);
    return prev;
}

void set_verbose(bool verbose) { g_verbose = verbose; }

void log_info(const std::string& msg) { sink()(LogLevel::info, msg); }
void log_warning(const std::string& msg) { sink()(LogLevel::warning, msg); }

}  // namespace rebar
