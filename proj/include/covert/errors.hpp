#pragma once

#include <stdexcept>
#include <string>

namespace covert {

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Mismatched lengths or dimensions between inputs.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid or unknown configuration value.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong lifecycle state.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Malformed file contents (token files, key files, checkpoints).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HandshakeError : ProtocolError {
  using ProtocolError::ProtocolError;
};

struct VersionMismatchError : HandshakeError {
  using HandshakeError::HandshakeError;
};

struct TimeoutError : ProtocolError {
  using ProtocolError::ProtocolError;
};

/// Error object returned by the scorer process; carries the scorer's message.
struct ScorerError : ProtocolError {
  using ProtocolError::ProtocolError;
};

/// Non-finite network output, non-finite loss, or parameter blow-up.
struct TrainingFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace covert
