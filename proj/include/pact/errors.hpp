#pragma once

#include <stdexcept>
#include <string>

namespace pact {

// Base class for all toolkit errors so callers can catch one type at the CLI
// boundary and map it to an exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PACT_DEFINE_ERROR(NAME)                                  \
    class NAME : public Error {                                  \
    public:                                                      \
        explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
    }

PACT_DEFINE_ERROR(ShapeMismatch);
PACT_DEFINE_ERROR(GeometryMismatch);
PACT_DEFINE_ERROR(TimeWindowTooShort);
PACT_DEFINE_ERROR(GridOutsideRing);
PACT_DEFINE_ERROR(AllChannelsMasked);
PACT_DEFINE_ERROR(Divergence);
PACT_DEFINE_ERROR(UnplaceableShape);
PACT_DEFINE_ERROR(CorruptFile);
PACT_DEFINE_ERROR(VersionMismatch);
PACT_DEFINE_ERROR(AngleNotExact);
PACT_DEFINE_ERROR(BadShape);
PACT_DEFINE_ERROR(NonScalarLoss);
PACT_DEFINE_ERROR(DoubleBackward);
PACT_DEFINE_ERROR(DegenerateMask);
PACT_DEFINE_ERROR(NonFiniteLoss);
PACT_DEFINE_ERROR(ZeroReference);
PACT_DEFINE_ERROR(IndivisibleHeads);
PACT_DEFINE_ERROR(InvalidConfig);

#undef PACT_DEFINE_ERROR

} // namespace pact
