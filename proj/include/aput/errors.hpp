#pragma once

#include <stdexcept>
#include <string>

namespace aput {

/// Invalid construction parameters, config files or option combinations.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (CSV rows, label sets). Carries the 1-based row
/// number when one is known; row 0 means "not row specific".
class IngestError : public std::runtime_error {
public:
    IngestError(const std::string& what, long row = 0)
        : std::runtime_error(row > 0 ? what + " (row " + std::to_string(row) + ")" : what),
          row_(row) {}
    long row() const { return row_; }

private:
    long row_;
};

/// API misuse: calling into an object in a state that does not admit the call.
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

/// Tractability guard tripped (enumeration or grid too large).
class SizeError : public std::runtime_error {
public:
    explicit SizeError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: divergence, non-convergence, impossible observation.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// An observation with (near-)zero likelihood under the current belief/model.
class ZeroLikelihoodError : public NumericError {
public:
    explicit ZeroLikelihoodError(const std::string& what) : NumericError(what) {}
};

} // namespace aput
