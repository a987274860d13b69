#ifndef PSEG_ERROR_HPP
#define PSEG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pseg {

/// Base of every error raised by the library. `exit_code()` is the CLI
/// status the error maps to.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

/// Input or parameter violates a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// File could not be read, written or parsed.
class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Computation produced a non-finite or otherwise unusable value.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

}  // namespace detail
}  // namespace pseg

#endif  // PSEG_ERROR_HPP
