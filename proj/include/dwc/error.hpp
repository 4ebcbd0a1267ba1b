#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dwc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent configuration. Raised before any document is touched.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// I/O failures and other problems that only show up while running.
class RuntimeError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "validation failed:";
        for (const auto& s : v) {
            out += " ";
            out += s;
            out += ";";
        }
        return out;
    }

    std::vector<std::string> violations_;
};

}  // namespace dwc
