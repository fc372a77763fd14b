#pragma once

#include <stdexcept>
#include <string>

namespace attribaudit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad config, bad arguments, malformed input. CLI exit code 1.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed data file; message carries file, line, column context.
struct SchemaError : ConfigError {
    SchemaError(const std::string& file, std::size_t line, const std::string& column,
                const std::string& what)
        : ConfigError(file + ":" + std::to_string(line) + ": column '" + column + "': " + what) {}
    explicit SchemaError(const std::string& what) : ConfigError(what) {}
};

// Model cannot serve the request (no gradients, not glassbox).
struct CapabilityError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

// Metric undefined on the given inputs (single-class AUROC, no positives, ...).
struct MetricError : Error {
    using Error::Error;
};

}  // namespace attribaudit
