#pragma once
#include <stdexcept>
#include <string>

namespace mfsgd {

// invalid configuration / usage; CLI maps these to exit code 2
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// mismatched array dimensions are treated as configuration bugs
struct DimensionError : ConfigError {
    using ConfigError::ConfigError;
};

// unsupported probe for the requested operation
struct ProbeError : ConfigError {
    using ConfigError::ConfigError;
};

// numerical failure during a run (non-finite weights etc.); CLI exit code 3
struct NumericError : std::runtime_error {
    long step = -1;
    long neuron = -1;
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
    NumericError(const std::string& what, long step_, long neuron_)
        : std::runtime_error(what), step(step_), neuron(neuron_) {}
};

// filesystem failure; CLI exit code 4
struct IoError : std::runtime_error {
    std::string path;
    IoError(const std::string& what, std::string path_)
        : std::runtime_error(what + ": " + path_), path(std::move(path_)) {}
};

}  // namespace mfsgd
