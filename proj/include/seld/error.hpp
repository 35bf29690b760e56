// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace seld {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SELD_DEFINE_ERROR(name)          \
  class name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

SELD_DEFINE_ERROR(ShapeError);
SELD_DEFINE_ERROR(FormatError);
SELD_DEFINE_ERROR(IoError);
SELD_DEFINE_ERROR(InputError);
SELD_DEFINE_ERROR(UnsupportedError);
SELD_DEFINE_ERROR(DegenerateInputError);
SELD_DEFINE_ERROR(ConfigError);
SELD_DEFINE_ERROR(DataError);
SELD_DEFINE_ERROR(NumericError);
SELD_DEFINE_ERROR(SpecError);
SELD_DEFINE_ERROR(UninitializedError);

#undef SELD_DEFINE_ERROR

}  // namespace seld
