#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tride {

// Shape rule violated (mismatched extents, non-positive output sizes, ...).
class DimError : public std::runtime_error {
 public:
  explicit DimError(const std::string& msg) : std::runtime_error(msg) {}
};

// A stated precondition of an operation was violated.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// On-disk container is malformed; carries the byte offset of the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Free-text input (scene description) does not follow the grammar.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tride
