#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskdg {

enum class ErrorKind {
  ManifestNotFound,
  InconsistentSample,
  InvalidMask,
  InvalidImage,
  InvalidLabel,
  Parameter,
  Io,
  Parse,
  InvalidFixation,
  DegenerateHeatmap,
  DegenerateDataset,
  DegenerateLabels,
  NumericalFailure,
  UnsupportedModel,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and tests)
// can dispatch without parsing messages. The message always starts with the
// kind's canonical text, e.g. "inconsistent sample: mask 8x8 vs image 16x16".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace maskdg
