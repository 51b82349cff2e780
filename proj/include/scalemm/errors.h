#pragma once

#include <stdexcept>
#include <string>

namespace scalemm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The closed-form denominator vanished: no pair constrains the scale.
class DegenerateSystem : public Error {
 public:
  using Error::Error;
};

class AllRejected : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class DegenerateRays : public Error {
 public:
  using Error::Error;
};

class PlacementFailure : public Error {
 public:
  using Error::Error;
};

class SingularNormalEquations : public Error {
 public:
  using Error::Error;
};

// Malformed input. The message carries a file/line locator.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class MissingGroundTruth : public Error {
 public:
  using Error::Error;
};

}  // namespace scalemm
