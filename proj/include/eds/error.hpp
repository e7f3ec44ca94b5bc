/*
 * Copyright 2026 The EDS Workbench Authors.
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

#ifndef EDS_ERROR_HPP_
#define EDS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace eds {

// Every failure raised by the library. Callers that need to distinguish
// categories inspect kind().
class Error : public std::runtime_error {
 public:
  enum class Kind {
    kInvalidArgument,
    kParse,
    kNotFound,
    kIo,
  };

  Error(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline Error InvalidArgument(const std::string& message) {
  return Error(Error::Kind::kInvalidArgument, message);
}
inline Error ParseError(const std::string& message) {
  return Error(Error::Kind::kParse, message);
}
inline Error NotFound(const std::string& message) {
  return Error(Error::Kind::kNotFound, message);
}
inline Error IoError(const std::string& message) {
  return Error(Error::Kind::kIo, message);
}

}  // namespace eds

#endif  // EDS_ERROR_HPP_
