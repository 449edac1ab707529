#pragma once

#include <stdexcept>
#include <string>

namespace teachaudit {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. The CLI maps these to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Model endpoint failures. The CLI maps these to exit code 3.
class EndpointFailure : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

#define TEACHAUDIT_ERROR(Name, Base) \
  class Name : public Base {         \
   public:                           \
    using Base::Base;                \
  }

TEACHAUDIT_ERROR(ParseError, DataError);
TEACHAUDIT_ERROR(InvariantError, DataError);
TEACHAUDIT_ERROR(InsufficientCell, DataError);
TEACHAUDIT_ERROR(UnknownHash, DataError);
TEACHAUDIT_ERROR(LevelOutOfRange, DataError);
TEACHAUDIT_ERROR(NoRuns, DataError);
TEACHAUDIT_ERROR(IoError, DataError);

TEACHAUDIT_ERROR(TooManyDistinct, PreconditionError);
TEACHAUDIT_ERROR(BadOrdering, PreconditionError);

TEACHAUDIT_ERROR(NetworkError, EndpointFailure);
TEACHAUDIT_ERROR(AuthError, EndpointFailure);
TEACHAUDIT_ERROR(EndpointError, EndpointFailure);
TEACHAUDIT_ERROR(CacheConflict, EndpointFailure);

TEACHAUDIT_ERROR(DegenerateText, Error);
TEACHAUDIT_ERROR(NoData, Error);
TEACHAUDIT_ERROR(ZeroVariance, Error);
TEACHAUDIT_ERROR(TooFewBlocks, Error);
TEACHAUDIT_ERROR(LengthMismatch, Error);

#undef TEACHAUDIT_ERROR

}  // namespace teachaudit
