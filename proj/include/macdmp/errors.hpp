#pragma once

#include <stdexcept>
#include <string>

namespace macdmp {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument values (negative distance, NaN demand, k out of range...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Bad or incomplete configuration. Message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Frame protocol violation (overlapping or missing resource blocks).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Node layout whose radio graph is not connected.
class TopologyError : public Error {
 public:
  using Error::Error;
};

// A required input file does not exist.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

// Container format errors. All map to the "schema" exit code in the CLI.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Wrong file kind or incompatible content (e.g. horizon mismatch).
class SchemaError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace macdmp
