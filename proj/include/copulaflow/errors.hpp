#pragma once

#include <stdexcept>
#include <string>

namespace copulaflow {

//! Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//! Invalid hyper-parameters or sizes (bins, layer widths, fractions, ...).
class ConfigError : public Error
{
public:
  using Error::Error;
};

//! Non-finite or otherwise invalid model parameters.
class ParameterError : public Error
{
public:
  using Error::Error;
};

//! Caller passed an argument outside an operation's domain.
class ArgumentError : public Error
{
public:
  using Error::Error;
};

//! Malformed, missing or non-finite input data.
class DataError : public Error
{
public:
  using Error::Error;
};

//! A column without variation; continuous fits refuse it.
class DegenerateDataError : public DataError
{
public:
  using DataError::DataError;
};

//! Raised when a loss or gradient turns non-finite during training.
class TrainingError : public Error
{
public:
  TrainingError(const std::string& what, long batch_index = -1)
    : Error(what)
    , batch_index_(batch_index)
  {}

  long batch_index() const { return batch_index_; }

private:
  long batch_index_;
};

//! Efficacy task cannot be built (e.g. constant target).
class TaskError : public DataError
{
public:
  using DataError::DataError;
};

//! Model file is truncated or corrupted.
class IntegrityError : public Error
{
public:
  using Error::Error;
};

//! Model file written by an incompatible format version.
class VersionError : public Error
{
public:
  VersionError(int found, int expected)
    : Error("model file version " + std::to_string(found) +
            " is not supported (expected version " +
            std::to_string(expected) + ")")
    , found_(found)
    , expected_(expected)
  {}

  int found() const { return found_; }
  int expected() const { return expected_; }

private:
  int found_;
  int expected_;
};

} // namespace copulaflow
