// Copyright 2026 The doatrack Authors
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

#include "doatrack/error.hpp"

namespace doatrack {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDegenerateDirection: return "DegenerateDirection";
    case ErrorCode::kOutOfRoom: return "OutOfRoom";
    case ErrorCode::kAllSilent: return "AllSilent";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kLagRangeTooSmall: return "LagRangeTooSmall";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace doatrack
