#pragma once

#include <stdexcept>
#include <string>

namespace bisic {

// Every failure the library reports derives from Error; the CLI maps the
// concrete type to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed container, checkpoint, or CSV.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Decoded data disagrees with what the encoder committed to.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Coding steps called out of order (e.g. non-anchor before anchor).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class CoderError : public Error {
 public:
  using Error::Error;
};

class TrainingFault : public Error {
 public:
  using Error::Error;
};

class OverlapError : public Error {
 public:
  using Error::Error;
};

}  // namespace bisic
