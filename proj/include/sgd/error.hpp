#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgd {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `offset` is a byte offset into the file when known.
class ParseError : public Error {
public:
  ParseError(std::string file, std::size_t offset, const std::string& what)
      : Error(file.empty() ? what
                           : file + ":" + std::to_string(offset) + ": " + what),
        file_(std::move(file)),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t offset() const noexcept { return offset_; }

private:
  std::string file_;
  std::size_t offset_;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

} // namespace sgd
