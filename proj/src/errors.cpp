#include "fastmr/errors.hpp"

namespace fastmr {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::NonPositiveVolatility: return "NonPositiveVolatility";
        case Errc::NonconvergedInverse: return "NonconvergedInverse";
        case Errc::DegenerateSecondDerivative: return "DegenerateSecondDerivative";
        case Errc::NonNormalizable: return "NonNormalizable";
        case Errc::DensityUnderflow: return "DensityUnderflow";
        case Errc::MonotonicityLoss: return "MonotonicityLoss";
        case Errc::BoundaryTooNarrow: return "BoundaryTooNarrow";
        case Errc::InversionFailure: return "InversionFailure";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::StencilOverflow: return "StencilOverflow";
        case Errc::ConvexityLoss: return "ConvexityLoss";
        case Errc::StepTooCoarse: return "StepTooCoarse";
        case Errc::NumericBlowup: return "NumericBlowup";
        case Errc::NoiseDominated: return "NoiseDominated";
        case Errc::InconclusiveNoise: return "InconclusiveNoise";
        case Errc::CFLViolation: return "CFLViolation";
        case Errc::InstabilityDetected: return "InstabilityDetected";
        case Errc::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace fastmr
