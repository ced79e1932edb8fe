#pragma once

#include <stdexcept>
#include <string>

namespace mcstab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// numerics
class SingularMatrix : public Error { using Error::Error; };
class NoConvergence : public Error { using Error::Error; };

// reaction
class NegativeState : public Error { using Error::Error; };
class ResolventSingular : public Error { using Error::Error; };

// channel
class PoleProximity : public Error { using Error::Error; };

// stability
class NotCirculant : public Error { using Error::Error; };
class RefinementExhausted : public Error { using Error::Error; };
class UnderResolved : public Error { using Error::Error; };
class ContourTruncated : public Error { using Error::Error; };

/// Marginal cases where the criterion does not apply. The CLI maps these to
/// exit code 20.
class VerdictRefused : public Error { using Error::Error; };
class BoundaryAmbiguous : public VerdictRefused { using VerdictRefused::VerdictRefused; };
class ThroughCriticalPoint : public VerdictRefused { using VerdictRefused::VerdictRefused; };

// simulator
class NonFinite : public Error { using Error::Error; };

// cli / config
class ConfigError : public Error { using Error::Error; };
class SameVerdictAtEnds : public Error { using Error::Error; };

}  // namespace mcstab
