#pragma once

#include <stdexcept>
#include <string>

namespace sdfas {

// Error categories map one-to-one onto the CLI exit codes (usage=1, data=2,
// numeric=3). ShapeError is a data error raised while wiring or feeding graphs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sdfas
