// Copyright 2026 The tdelta Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tdelta {

enum class ErrorKind {
  kInvalidPage,
  kInvalidBlock,
  kInvalidBox,
  kInvalidConfig,
  kUndefinedLoss,
  kMissingTrace,
  kNanGradient,
  kEmptyDataset,
  kInvalidSchedule,
  kGeneration,
  kIo,
  kBadMagic,
  kVersionMismatch,
  kCrcMismatch,
  kLengthMismatch,
  kParse,
  kInvalidLabel,
  kDuplicatePageId,
  kValidation,
  kGradCheckFailed,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidPage: return "invalid_page";
    case ErrorKind::kInvalidBlock: return "invalid_block";
    case ErrorKind::kInvalidBox: return "invalid_box";
    case ErrorKind::kInvalidConfig: return "invalid_config";
    case ErrorKind::kUndefinedLoss: return "undefined_loss";
    case ErrorKind::kMissingTrace: return "missing_trace";
    case ErrorKind::kNanGradient: return "nan_gradient";
    case ErrorKind::kEmptyDataset: return "empty_dataset";
    case ErrorKind::kInvalidSchedule: return "invalid_schedule";
    case ErrorKind::kGeneration: return "generation";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kBadMagic: return "bad_magic";
    case ErrorKind::kVersionMismatch: return "version_mismatch";
    case ErrorKind::kCrcMismatch: return "crc_mismatch";
    case ErrorKind::kLengthMismatch: return "length_mismatch";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kInvalidLabel: return "invalid_label";
    case ErrorKind::kDuplicatePageId: return "duplicate_page_id";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kGradCheckFailed: return "grad_check_failed";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI's JSON error output) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tdelta
