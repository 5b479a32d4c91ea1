#pragma once

#include <stdexcept>
#include <string>

namespace ldf {

//! Base class for every error raised by the toolkit.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Malformed input: bad CSV rows, schema mismatch, inconsistent dimensions.
class DataError : public Error
{
public:
  using Error::Error;
};

//! CSV parse failure; carries the 1-based line number of the offending row.
class ParseError : public DataError
{
public:
  ParseError(const std::string& what, std::size_t line)
    : DataError("line " + std::to_string(line) + ": " + what)
    , line_(line)
  {}

  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

//! Non-finite or exploding loss/objective during an iterative solver.
class DivergenceError : public Error
{
public:
  using Error::Error;
};

//! A held-out sensor showed up in a training or fitting partition.
class LeakageError : public Error
{
public:
  using Error::Error;
};

} // namespace ldf
