#pragma once

#include <stdexcept>
#include <string>

namespace foam {

// Error categories; the CLI maps these onto process exit codes.
enum class ErrorKind { internal = 1, config = 2, data = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    static Error config(std::string msg) { return {ErrorKind::config, std::move(msg)}; }
    static Error data(std::string msg) { return {ErrorKind::data, std::move(msg)}; }
    static Error numeric(std::string msg) { return {ErrorKind::numeric, std::move(msg)}; }
    static Error internal(std::string msg) { return {ErrorKind::internal, std::move(msg)}; }

private:
    ErrorKind kind_;
};

} // namespace foam
