#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fgaps {

// Every rejected input maps to exactly one of these.
enum class Errc {
  MalformedHeader,
  OffsetOutOfBounds,
  UnsupportedDtype,
  IoFailure,
  NonFiniteValue,
  SchemaError,
  MissingBundle,
  ShapeMismatch,
  MissingVariant,
  LayerOutOfRange,
  DegenerateMatrix,
  NoConvergence,
  MeanDiffNeedsBothClasses,
  NoUsableLayer,
  SingleClassLabels,
  NonFiniteLoss,
  MissingLogprobs,
  TooFewSamples,
  DegenerateOracle,
  NonFiniteInput,
  SearchSpaceTooLarge,
  RankDeficientBasis,
  ViolationFound,
  DigestMismatch,
  InvalidArgument,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string detail);

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace fgaps
