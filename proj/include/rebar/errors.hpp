#pragma once

#include <stdexcept>
#include <string>

namespace rebar {

enum class ErrorKind {
    format,
    consistency,
    validation,
    size,
    not_found,
    config,
    io,
    missing_artifact,
    numeric,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base of every error raised by the library. The kind is what the CLI maps
/// to an exit category.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define REBAR_DEFINE_ERROR(Name, Kind)                                         \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& message) : Error(Kind, message) {}    \
    };

REBAR_DEFINE_ERROR(FormatError, ErrorKind::format)
REBAR_DEFINE_ERROR(ConsistencyError, ErrorKind::consistency)
REBAR_DEFINE_ERROR(ValidationError, ErrorKind::validation)
REBAR_DEFINE_ERROR(SizeError, ErrorKind::size)
REBAR_DEFINE_ERROR(NotFoundError, ErrorKind::not_found)
REBAR_DEFINE_ERROR(ConfigError, ErrorKind::config)
REBAR_DEFINE_ERROR(IoError, ErrorKind::io)
REBAR_DEFINE_ERROR(MissingArtifactError, ErrorKind::missing_artifact)
REBAR_DEFINE_ERROR(NumericError, ErrorKind::numeric)

#undef REBAR_DEFINE_ERROR

}  // namespace rebar
