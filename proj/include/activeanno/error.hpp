#pragma once

#include <stdexcept>
#include <string>

namespace activeanno {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or configuration. Maps to CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// An annotator response that could not be mapped to labels.
class ParseFailure : public Error {
 public:
  using Error::Error;
};

class AnnotationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in gradients, losses or weights.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace activeanno
