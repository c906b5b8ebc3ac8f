#include "maskdg/error.hpp"

namespace maskdg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ManifestNotFound: return "manifest not found";
    case ErrorKind::InconsistentSample: return "inconsistent sample";
    case ErrorKind::InvalidMask: return "invalid mask";
    case ErrorKind::InvalidImage: return "invalid image";
    case ErrorKind::InvalidLabel: return "invalid label";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::InvalidFixation: return "invalid fixation";
    case ErrorKind::DegenerateHeatmap: return "degenerate heatmap";
    case ErrorKind::DegenerateDataset: return "degenerate dataset";
    case ErrorKind::DegenerateLabels: return "degenerate labels";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::UnsupportedModel: return "unsupported model";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(detail.empty() ? std::string(to_string(kind))
                                        : std::string(to_string(kind)) + ": " + detail),
      kind_(kind) {}

}  // namespace maskdg
