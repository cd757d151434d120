#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace scuc {

/// One violated instance invariant, addressed by a JSON-style field path
/// such as `generators[2].segments`.
struct Violation {
    std::string path;
    std::string message;
    bool connectivity = false;
};

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Document is not shaped like the instance schema (bad JSON, missing key,
/// wrong type).
struct SchemaError : Error {
    std::string path;
    SchemaError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), path(std::move(field)) {}
};

struct ValidationError : Error {
    std::vector<Violation> violations;
    explicit ValidationError(std::vector<Violation> v)
        : Error(describe(v)), violations(std::move(v)) {}

    static std::string describe(const std::vector<Violation>& v) {
        std::string out = "instance failed validation";
        for (const auto& x : v) out += "; " + x.path + ": " + x.message;
        return out;
    }
};

struct DisconnectedNetworkError : ValidationError {
    using ValidationError::ValidationError;
};

struct ArgumentError : Error {
    using Error::Error;
};

struct DimensionError : Error {
    using Error::Error;
};

/// The simplex kernel gave up (iteration cap or unrecoverable basis).
struct NumericalError : Error {
    using Error::Error;
};

struct ModelError : Error {
    using Error::Error;
};

struct MpsParseError : Error {
    int line;
    MpsParseError(int line_no, const std::string& what)
        : Error("MPS line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

struct MissingBaselineError : Error {
    using Error::Error;
};

struct EmptyEnvironmentError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct UnknownJobError : Error {
    using Error::Error;
};

/// The job has no solution (yet, or ever: detail names the state).
struct NotReadyError : Error {
    using Error::Error;
};

struct QueueFullError : Error {
    using Error::Error;
};

}  // namespace scuc
