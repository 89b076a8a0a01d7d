/*
 * Copyright 2026 The Myna Authors.
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

#ifndef MYNA_ERROR_HPP_
#define MYNA_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace myna {

// Every failure surfaced by the library derives from Error. The concrete
// subclasses let callers (and the CLI exit-code mapping) tell data problems
// apart from programming mistakes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MYNA_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  };

MYNA_DEFINE_ERROR(FormatError)       // malformed file header / bad magic
MYNA_DEFINE_ERROR(UnsupportedError)  // well-formed but unsupported encoding
MYNA_DEFINE_ERROR(CorruptionError)   // truncated file or checksum mismatch
MYNA_DEFINE_ERROR(ShapeError)
MYNA_DEFINE_ERROR(AxisError)
MYNA_DEFINE_ERROR(ContractError)     // API misuse (non-scalar backward, ...)
MYNA_DEFINE_ERROR(ConfigError)
MYNA_DEFINE_ERROR(ParameterError)    // numeric parameter out of range
MYNA_DEFINE_ERROR(TooShortError)     // clip shorter than one segment
MYNA_DEFINE_ERROR(BatchSizeError)
MYNA_DEFINE_ERROR(DataError)         // no usable input data
MYNA_DEFINE_ERROR(TaskError)         // degenerate probe task
MYNA_DEFINE_ERROR(ValidationError)   // inconsistent split definitions
MYNA_DEFINE_ERROR(NumericError)      // NaN / Inf encountered

#undef MYNA_DEFINE_ERROR

}  // namespace myna

#endif  // MYNA_ERROR_HPP_
