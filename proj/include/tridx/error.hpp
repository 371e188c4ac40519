// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy. The CLI maps each family onto a stable exit code.

#pragma once

#include <stdexcept>
#include <string>

namespace tridx {

/// Exit-code families: 1 usage/config, 2 data, 3 numeric.
enum class ErrorKind { kConfig = 1, kData = 2, kNumeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
/// Violated shape agreement between operands.
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
/// Caller broke an API precondition (wrong modality, non-scalar loss, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct ContextError : Error {
  explicit ContextError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct InputError : Error {
  explicit InputError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct EncodingError : Error {
  explicit EncodingError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct TaxonomyError : Error {
  explicit TaxonomyError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::kNumeric, w) {}
};

}  // namespace tridx
