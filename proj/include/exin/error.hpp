#pragma once
#include <stdexcept>
#include <string>

namespace exin {

// Error taxonomy. Every failure path throws one of these; the CLI maps each
// type to a fixed process exit code so scripts can branch on failure class.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed op inputs: rank/dim mismatches, empty tensors where data is required.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape: " + msg) {}
};

// API contract violations that are not shape problems (backward on a non-scalar,
// tensor not produced on the live tape, invalid enum value in code).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error("contract: " + msg) {}
};

// Out-of-range ids: token ids outside the vocab, class ids outside K, bad patch index.
struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error("index: " + msg) {}
};

// Bad run configuration: unknown key, unparsable value, inconsistent settings.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config: " + msg) {}
};

// Filesystem and serialization failures: missing file, truncated blob, CRC mismatch.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io: " + msg) {}
};

// Non-finite values where finite ones are required (loss blow-up, corrupt input).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error("numeric: " + msg) {}
};

}  // namespace exin
