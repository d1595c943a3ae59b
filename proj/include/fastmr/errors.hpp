#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fastmr {

/// Failure categories raised by the numerical modules.
enum class Errc {
    NonPositiveVolatility,
    NonconvergedInverse,
    DegenerateSecondDerivative,
    NonNormalizable,
    DensityUnderflow,
    MonotonicityLoss,
    BoundaryTooNarrow,
    InversionFailure,
    OutOfRange,
    StencilOverflow,
    ConvexityLoss,
    StepTooCoarse,
    NumericBlowup,
    NoiseDominated,
    InconclusiveNoise,
    CFLViolation,
    InstabilityDetected,
    InvalidArgument,
};

std::string_view to_string(Errc code) noexcept;

class NumericError : public std::runtime_error {
public:
    NumericError(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace fastmr
