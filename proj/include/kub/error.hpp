#pragma once

#include <stdexcept>
#include <string>

namespace kub {

/// Base of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input document (GeoJSON, ASCII grid, CSV, report files).
class parse_error : public error {
public:
    parse_error(const std::string& what, std::size_t line = 0)
        : error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid run configuration or command-line usage.
class config_error : public error {
public:
    using error::error;
};

/// Input that parses but violates a domain contract (degenerate rings, bad ids, ...).
class geometry_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    using error::error;
};

} // namespace kub
