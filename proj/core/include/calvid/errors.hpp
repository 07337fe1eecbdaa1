#pragma once

#include <stdexcept>
#include <string>

namespace calvid {

// Exit-code mapping used by the CLI: ConfigError -> 2,
// MissingArtifactError -> 3, DivergenceError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace calvid
