// Copyright 2026 The replaycm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "errors.hpp"

namespace replaycm {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kUnsupported: return "unsupported";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kParameter: return "parameter";
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kContract: return "contract";
    case ErrorCategory::kTraining: return "training";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kAlignment: return "alignment";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kMetric: return "metric";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kInternal: return "internal";
  }
  return "internal";
}

}  // namespace replaycm
