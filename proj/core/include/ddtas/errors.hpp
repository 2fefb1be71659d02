#pragma once

#include <stdexcept>
#include <string>

namespace ddtas {

// Pre-normalization embedding has zero length: dead network or zero input.
class DegenerateEmbeddingError : public std::runtime_error {
 public:
  explicit DegenerateEmbeddingError(std::size_t row)
      : std::runtime_error("degenerate embedding: zero pre-normalization vector at row " +
                           std::to_string(row)),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Mining left no pairs in a batch where the caller requires some.
class StarvedBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (CSV dataset, checkpoint, config).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ddtas
