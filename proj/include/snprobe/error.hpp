#pragma once

#include <stdexcept>
#include <string>

namespace snprobe {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an out-of-range parameter (bad lambda, empty grid, ...).
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// A file on disk is malformed: bad magic, truncated payload, bad JSON shape.
class FormatError : public Error {
  public:
    using Error::Error;
};

/// Well-formed inputs that violate a data contract: NaN activations,
/// manifest/dump length mismatch, neuron index outside the dump.
class DataError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Selection produced no neuron above the threshold.
class NoSuperNeuronsError : public Error {
  public:
    NoSuperNeuronsError(const std::string& what, float max_score)
        : Error(what), max_score_(max_score) {}

    float max_score() const noexcept { return max_score_; }

  private:
    float max_score_;
};

} // namespace snprobe
