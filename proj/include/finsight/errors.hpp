// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FINSIGHT_ERRORS_HPP_
#define FINSIGHT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace finsight {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FINSIGHT_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

// Shapes of operands disagree.
FINSIGHT_DEFINE_ERROR(DimensionError);
// A spatial extent collapses below one pixel or is otherwise impossible.
FINSIGHT_DEFINE_ERROR(GeometryError);
// Non-finite or out-of-domain numeric value.
FINSIGHT_DEFINE_ERROR(ValueError);
// A channel count is not divisible as required.
FINSIGHT_DEFINE_ERROR(DivisibilityError);
FINSIGHT_DEFINE_ERROR(ConfigError);
// A pyramid graph references a level that does not exist.
FINSIGHT_DEFINE_ERROR(TopologyError);
FINSIGHT_DEFINE_ERROR(TrainingError);
FINSIGHT_DEFINE_ERROR(ParseError);
FINSIGHT_DEFINE_ERROR(GenerationError);

#undef FINSIGHT_DEFINE_ERROR

}  // namespace finsight

#endif  // FINSIGHT_ERRORS_HPP_
