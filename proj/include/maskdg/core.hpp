#pragma once

#include "maskdg/error.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maskdg {

using ImageRaster = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskRaster = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using HeatRaster = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Grayscale classifier input, values in [0, 1].
class Image {
 public:
  static constexpr int kMinSide = 8;

  explicit Image(ImageRaster values);

  int height() const { return static_cast<int>(values_.rows()); }
  int width() const { return static_cast<int>(values_.cols()); }
  const ImageRaster& values() const { return values_; }
  float operator()(int r, int c) const { return values_(r, c); }

  friend bool operator==(const Image& a, const Image& b) { return a.values_ == b.values_; }

 private:
  ImageRaster values_;
};

// Binary region mask; 1 marks the region of interest.
class SegMask {
 public:
  explicit SegMask(MaskRaster values);

  static SegMask zeros(int height, int width);
  static SegMask ones(int height, int width);

  int height() const { return static_cast<int>(values_.rows()); }
  int width() const { return static_cast<int>(values_.cols()); }
  const MaskRaster& values() const { return values_; }
  bool operator()(int r, int c) const { return values_(r, c) != 0; }
  Eigen::Index popcount() const;
  // Pixelwise containment: every set pixel of `other` is set here.
  bool contains(const SegMask& other) const;

  friend bool operator==(const SegMask& a, const SegMask& b) { return a.values_ == b.values_; }

 private:
  MaskRaster values_;
};

// Nonnegative per-pixel density.
class Heatmap {
 public:
  explicit Heatmap(HeatRaster values);

  static Heatmap zeros(int height, int width);

  int height() const { return static_cast<int>(values_.rows()); }
  int width() const { return static_cast<int>(values_.cols()); }
  const HeatRaster& values() const { return values_; }
  double total() const { return values_.sum(); }

 private:
  HeatRaster values_;
};

enum class MaskKind { Abnormality, ScaledAbnormality, Periphery, GazeDerived, FullOnes };

std::string_view to_string(MaskKind kind);
// Accepts the canonical names plus the short forms used on disk and on the
// command line (abnormality, scaled, periphery, gaze, full).
MaskKind parse_mask_kind(std::string_view text);
// Directory name under masks/ for kinds that are stored on disk.
std::string_view storage_name(MaskKind kind);

struct LabeledSample {
  std::string id;
  Image image;
  int label = 0;
  std::optional<SegMask> abnormality_mask;
  std::string domain_id;
  // Additional stored masks (scaled, periphery, gaze) keyed by kind.
  std::map<MaskKind, SegMask> region_masks;

  // Throws on any violated invariant: binary label, mask present and
  // nonempty for positives, mask shapes equal to the image shape.
  void validate() const;
};

void check_same_shape(const Image& image, const SegMask& mask);

}  // namespace maskdg
