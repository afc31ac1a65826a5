#pragma once

#include <stdexcept>
#include <string>

namespace micc {

// Exit-code taxonomy used by the CLI: ConfigError -> 1, DataError -> 2,
// NumericError -> 3. ShapeError is a config-class failure (bad wiring).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace micc
