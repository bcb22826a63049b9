#include "fgaps/errors.hpp"

namespace fgaps {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::OffsetOutOfBounds: return "OffsetOutOfBounds";
    case Errc::UnsupportedDtype: return "UnsupportedDtype";
    case Errc::IoFailure: return "IoFailure";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::SchemaError: return "SchemaError";
    case Errc::MissingBundle: return "MissingBundle";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::MissingVariant: return "MissingVariant";
    case Errc::LayerOutOfRange: return "LayerOutOfRange";
    case Errc::DegenerateMatrix: return "DegenerateMatrix";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::MeanDiffNeedsBothClasses: return "MeanDiffNeedsBothClasses";
    case Errc::NoUsableLayer: return "NoUsableLayer";
    case Errc::SingleClassLabels: return "SingleClassLabels";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::MissingLogprobs: return "MissingLogprobs";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::DegenerateOracle: return "DegenerateOracle";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::SearchSpaceTooLarge: return "SearchSpaceTooLarge";
    case Errc::RankDeficientBasis: return "RankDeficientBasis";
    case Errc::ViolationFound: return "ViolationFound";
    case Errc::DigestMismatch: return "DigestMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(Errc code, std::string detail)
    : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)) {}

}  // namespace fgaps
