#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace patchrd {

// Caller passed something the operation cannot accept (sizes, ranges, empty inputs).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed PVOX1 / PRDB1 / text grid. offset is the byte (or line) position of the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No usable patch could be sampled from the partial input.
class EmptyCodebookError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Synthetic corruption could not realize the requested crop.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during embedding training or blend optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace patchrd
