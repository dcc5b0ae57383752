#ifndef TFLR_ERRORS_HPP
#define TFLR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tflr {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix sizes or incompatible grids.
struct DimensionError : Error {
    using Error::Error;
};

// Argument outside its mathematical domain (e.g. theta <= 0).
struct DomainError : Error {
    using Error::Error;
};

// Too few observations for the requested operation.
struct InsufficientDataError : Error {
    using Error::Error;
};

// Requested component count exceeds what the data can support.
// `largest_feasible` tells the caller how far m must shrink.
struct InfeasibleModelError : Error {
    int largest_feasible;
    InfeasibleModelError(const std::string& msg, int feasible)
        : Error(msg), largest_feasible(feasible) {}
};

// Eigenvalue below the invertibility floor.
struct IllConditionedError : Error {
    int largest_feasible;
    IllConditionedError(const std::string& msg, int feasible)
        : Error(msg), largest_feasible(feasible) {}
};

// Numerical breakdown (e.g. covariance eigenvalue far below zero).
struct NumericalError : Error {
    using Error::Error;
};

// Malformed input file; message carries the file name and line number.
struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace tflr

#endif
