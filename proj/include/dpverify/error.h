//
// Copyright 2026 The dpverify Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPVERIFY_ERROR_H_
#define DPVERIFY_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpverify {

enum class ErrorCode {
  kInvalidArgument,
  kFailedPrecondition,
  kNumerical,      // ill-conditioned or non-finite linear algebra
  kNotConverged,   // iteration cap hit
  kDivergence,     // simulated state left the finite range
  kSchema,         // malformed CSV / wire record
  kVersion,        // wire version mismatch
  kIo,
  kProtocol,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure in the library surfaces as this exception. `field` is set for
// schema errors and names the offending field path or CSV row.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = "")
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const { return code_; }
  const std::string& field() const { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message,
                              std::string field = "") {
  throw Error(code, message, std::move(field));
}

inline void Require(bool condition, const std::string& message) {
  if (!condition) Fail(ErrorCode::kInvalidArgument, message);
}

}  // namespace dpverify

#endif  // DPVERIFY_ERROR_H_
