#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qvt {

// Base for everything the library throws on bad input. The CLI maps
// subclasses onto exit codes: NumericError -> 3, everything else -> 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// NaN/Inf encountered, or training diverged.
class NumericError : public Error {
public:
    using Error::Error;
};

// Failures while decoding a QVC1 file.
class FormatError : public Error {
public:
    enum class Kind {
        Io,
        BadMagic,
        Truncated,
        BadHeader,
        DuplicateName,
        SizeMismatch,
        NonFinite,
    };

    FormatError(Kind kind, std::string tensor, const std::string & what)
        : Error(what), kind_(kind), tensor_(std::move(tensor)) {}

    Kind kind() const noexcept { return kind_; }
    // Offending tensor name; empty when the error is not tensor-specific.
    const std::string & tensor() const noexcept { return tensor_; }

private:
    Kind        kind_;
    std::string tensor_;
};

const char * to_string(FormatError::Kind kind);

// Two checkpoints whose name sets or shapes disagree.
class IncompatibleCheckpoints : public ValidationError {
public:
    IncompatibleCheckpoints(std::vector<std::string> missing,
                            std::vector<std::string> extra,
                            std::vector<std::string> shape_conflicts);

    // Names present in the second operand but not the first.
    const std::vector<std::string> & missing() const noexcept { return missing_; }
    // Names present in the first operand but not the second.
    const std::vector<std::string> & extra() const noexcept { return extra_; }
    const std::vector<std::string> & shape_conflicts() const noexcept { return shape_conflicts_; }

private:
    std::vector<std::string> missing_;
    std::vector<std::string> extra_;
    std::vector<std::string> shape_conflicts_;
};

// A quantization vector that does not live in the receiver's coordinates.
class GaugeMismatch : public ValidationError {
public:
    GaugeMismatch(std::string tensor, const std::string & what)
        : ValidationError(what), tensor_(std::move(tensor)) {}

    const std::string & tensor() const noexcept { return tensor_; }

private:
    std::string tensor_;
};

}  // namespace qvt
