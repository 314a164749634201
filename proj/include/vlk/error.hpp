#pragma once

#include <stdexcept>
#include <string>

namespace vlk {

/// Base of every data or validation failure raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value broke a documented type invariant (bad dims, non-binary mask, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// File was readable but its content violates the on-disk format.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// External predictor process failed; carries its captured output.
class PredictorError : public Error {
 public:
  PredictorError(const std::string& what, std::string diagnostics)
      : Error(what), diagnostics_(std::move(diagnostics)) {}

  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

/// External predictor ran but its output does not follow the plugin protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace vlk
