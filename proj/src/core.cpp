#include "maskdg/core.hpp"

#include <cmath>
#include <sstream>

namespace maskdg {

namespace {

std::string shape_text(Eigen::Index h, Eigen::Index w) {
  std::ostringstream os;
  os << h << "x" << w;
  return os.str();
}

}  // namespace

Image::Image(ImageRaster values) : values_(std::move(values)) {
  if (values_.rows() < kMinSide || values_.cols() < kMinSide) {
    throw Error(ErrorKind::InvalidImage,
                "image " + shape_text(values_.rows(), values_.cols()) + " is smaller than 8x8");
  }
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const float v = values_.data()[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw Error(ErrorKind::InvalidImage, "pixel value outside [0,1] at flat index " + std::to_string(i));
    }
  }
}

SegMask::SegMask(MaskRaster values) : values_(std::move(values)) {
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (values_.data()[i] > 1) {
      throw Error(ErrorKind::InvalidMask, "non-binary value at flat index " + std::to_string(i));
    }
  }
}

SegMask SegMask::zeros(int height, int width) { return SegMask(MaskRaster::Zero(height, width)); }

SegMask SegMask::ones(int height, int width) { return SegMask(MaskRaster::Ones(height, width)); }

Eigen::Index SegMask::popcount() const { return values_.cast<Eigen::Index>().sum(); }

bool SegMask::contains(const SegMask& other) const {
  if (other.height() != height() || other.width() != width()) return false;
  return ((other.values_.array() != 0) <= (values_.array() != 0)).all();
}

Heatmap::Heatmap(HeatRaster values) : values_(std::move(values)) {
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const double v = values_.data()[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorKind::Parameter, "heatmap value must be finite and nonnegative");
    }
  }
}

Heatmap Heatmap::zeros(int height, int width) { return Heatmap(HeatRaster::Zero(height, width)); }

std::string_view to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::Abnormality: return "Abnormality";
    case MaskKind::ScaledAbnormality: return "ScaledAbnormality";
    case MaskKind::Periphery: return "Periphery";
    case MaskKind::GazeDerived: return "GazeDerived";
    case MaskKind::FullOnes: return "FullOnes";
  }
  return "?";
}

std::string_view storage_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::Abnormality: return "abnormality";
    case MaskKind::ScaledAbnormality: return "scaled";
    case MaskKind::Periphery: return "periphery";
    case MaskKind::GazeDerived: return "gaze";
    case MaskKind::FullOnes: return "full";
  }
  return "?";
}

MaskKind parse_mask_kind(std::string_view text) {
  for (MaskKind k : {MaskKind::Abnormality, MaskKind::ScaledAbnormality, MaskKind::Periphery,
                     MaskKind::GazeDerived, MaskKind::FullOnes}) {
    if (text == to_string(k) || text == storage_name(k)) return k;
  }
  throw Error(ErrorKind::Parameter, "unknown mask kind '" + std::string(text) + "'");
}

void check_same_shape(const Image& image, const SegMask& mask) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw Error(ErrorKind::InconsistentSample,
                "mask " + shape_text(mask.height(), mask.width()) + " vs image " +
                    shape_text(image.height(), image.width()));
  }
}

void LabeledSample::validate() const {
  if (label != 0 && label != 1) {
    throw Error(ErrorKind::InvalidLabel, "sample " + id + " has label " + std::to_string(label));
  }
  if (abnormality_mask) check_same_shape(image, *abnormality_mask);
  for (const auto& [kind, mask] : region_masks) check_same_shape(image, mask);
  if (label == 1 && (!abnormality_mask || abnormality_mask->popcount() == 0)) {
    throw Error(ErrorKind::InvalidMask, "positive sample " + id + " needs a nonempty abnormality mask");
  }
}

}  // namespace maskdg
