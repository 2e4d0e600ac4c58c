/*
 * Copyright 2026 The svcrec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SVCREC_ERROR_H_
#define SVCREC_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace svcrec {

using TokenId = std::int32_t;
using ServiceId = std::int32_t;

// Raised for invalid inputs and violated preconditions. The `code` is a short
// machine-readable tag surfaced by the CLI error record.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace svcrec

#endif  // SVCREC_ERROR_H_
