#ifndef EEGCN_ERRORS_HPP
#define EEGCN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace eegcn {

// Error taxonomy used across the library. The CLI maps ConfigError and
// ArgumentError to exit code 2 (usage/config), everything else to 1.

struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VocabularyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace eegcn

#endif  // EEGCN_ERRORS_HPP
