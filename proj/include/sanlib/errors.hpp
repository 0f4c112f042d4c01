#pragma once

#include <stdexcept>
#include <string>

namespace san {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyInput : Error { using Error::Error; };
struct DuplicateVertex : Error { using Error::Error; };
struct OrderOutOfRange : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct EigenFailure : Error { using Error::Error; };
struct EpsilonOutOfRange : Error { using Error::Error; };
struct NonScalarLoss : Error { using Error::Error; };
struct EmptyMask : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct FingerprintMismatch : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };
struct DegenerateTriangulation : Error { using Error::Error; };
struct DisconnectedAfterHolePunch : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

} // namespace san
