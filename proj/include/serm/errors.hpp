#pragma once

#include <stdexcept>
#include <string>

namespace serm {

// Malformed arguments or records handed to an operation.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration (bad thresholds, mismatched label sets,
// unknown config keys). `field` carries the dotted path when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, std::string field = {})
      : std::runtime_error(field.empty() ? msg : field + ": " + msg),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Operation called on an object that is not ready (e.g. unfitted click model).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An annotator backend failed after all retries for one pair.
class BackendError : public std::runtime_error {
 public:
  BackendError(std::string backend_id, const std::string& msg)
      : std::runtime_error(backend_id + ": " + msg), backend_id_(std::move(backend_id)) {}
  const std::string& backend_id() const noexcept { return backend_id_; }

 private:
  std::string backend_id_;
};

// Transport-level failure: the backend could not be reached at all.
class BackendUnreachable : public BackendError {
 public:
  using BackendError::BackendError;
};

class UndefinedRatio : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A persisted artifact failed to parse or did not match its recorded hash.
class CorruptArtifact : public std::runtime_error {
 public:
  CorruptArtifact(std::string path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Refusing to write into a non-empty artifact directory without --force.
class UnsafeOverwrite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace serm
