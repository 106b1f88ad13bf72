// Copyright 2026 The sipreward Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sipreward {

/// Root of every error thrown by the library. The three intermediate classes
/// map onto the CLI exit codes (usage = 1, data = 2, backend = 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class MalformedRecord : public DataError {
 public:
  MalformedRecord(std::size_t line_no, const std::string& reason)
      : DataError("MalformedRecord at line " + std::to_string(line_no) + ": " + reason),
        line_no_(line_no),
        reason_(reason) {}

  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_no_;
  std::string reason_;
};

class DuplicateId : public DataError {
 public:
  explicit DuplicateId(const std::string& id) : DataError("DuplicateId: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class UnknownInstance : public DataError {
 public:
  explicit UnknownInstance(const std::string& id) : DataError("UnknownInstance: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

#define SIPREWARD_DATA_ERROR(Name)                                     \
  class Name : public DataError {                                      \
   public:                                                             \
    explicit Name(const std::string& what) : DataError(#Name ": " + what) {} \
  }

SIPREWARD_DATA_ERROR(InsufficientData);
SIPREWARD_DATA_ERROR(MissingThinking);
SIPREWARD_DATA_ERROR(DomainError);
SIPREWARD_DATA_ERROR(StepOutOfRange);
SIPREWARD_DATA_ERROR(ComponentOutOfRange);
SIPREWARD_DATA_ERROR(GroupTooSmall);
SIPREWARD_DATA_ERROR(EmptyPairSet);
SIPREWARD_DATA_ERROR(EmptyInput);
SIPREWARD_DATA_ERROR(AnchorOutOfRange);
SIPREWARD_DATA_ERROR(MisalignedPairs);

#undef SIPREWARD_DATA_ERROR

class BackendUnavailable : public BackendError {
 public:
  explicit BackendUnavailable(const std::string& what) : BackendError("BackendUnavailable: " + what) {}
};

/// The backend answered, but neither the structured nor the scalar parser
/// could read the reply. The raw reply is kept for diagnostics.
class UnparseableVerdict : public BackendError {
 public:
  UnparseableVerdict(const std::string& why, std::string raw)
      : BackendError("UnparseableVerdict: " + why), raw_(std::move(raw)) {}
  const std::string& raw_response() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace sipreward
