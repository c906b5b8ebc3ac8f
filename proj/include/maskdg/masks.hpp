#pragma once

#include "maskdg/core.hpp"
#include "maskdg/domain_spec.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace maskdg {

// Background shuffle: pixels with seg == 1 keep their value; pixels with
// seg == 0 receive a seeded uniform permutation of the background values.
// Works on any dense raster (any size, any scalar); `seg` must match its
// shape.
template <typename Derived>
typename Derived::PlainObject apply_shuffle_mask(const Eigen::DenseBase<Derived>& x, const MaskRaster& seg,
                                                 std::uint64_t seed) {
  if (x.rows() != seg.rows() || x.cols() != seg.cols()) {
    throw Error(ErrorKind::InconsistentSample, "shuffle mask shape differs from image shape");
  }
  typename Derived::PlainObject out = x;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> background;
  for (Eigen::Index r = 0; r < seg.rows(); ++r) {
    for (Eigen::Index c = 0; c < seg.cols(); ++c) {
      if (seg(r, c) == 0) background.emplace_back(r, c);
    }
  }
  std::vector<typename Derived::Scalar> values;
  values.reserve(background.size());
  for (auto [r, c] : background) values.push_back(x(r, c));
  std::mt19937_64 rng(seed);
  std::shuffle(values.begin(), values.end(), rng);
  for (std::size_t i = 0; i < background.size(); ++i) out(background[i].first, background[i].second) = values[i];
  return out;
}

Image apply_shuffle_mask(const Image& x, const SegMask& seg, std::uint64_t seed);

// Coarsen-then-expand: each block x block tile is set iff the input tile has
// a set pixel. Partial tiles at the bottom/right edge behave as if padded
// with zeros.
MaskRaster scale_mask(const MaskRaster& seg, int block);
SegMask scale_mask(const SegMask& seg, int block);

// Pixels whose center lies at distance d from the image center with
// r_inner <= d <= r_outer.
MaskRaster annulus_raster(int height, int width, double r_inner, double r_outer);
SegMask periphery_mask(const DomainSpec& spec);

MaskRaster union_mask(const MaskRaster& a, const MaskRaster& b);
SegMask union_mask(const SegMask& a, const SegMask& b);

// Tile size used to coarsen abnormality masks on 64x64 images.
inline constexpr int kDefaultScaleBlock = 16;

// Everything needed to turn a sample into the region mask used by ActDiff /
// RRR for a given mask condition.
struct MaskContext {
  SegMask periphery;
  std::optional<SegMask> gaze;
  int scale_block = kDefaultScaleBlock;
};

// Region mask for one sample under `kind`:
//   Abnormality        positives: abnormality mask; negatives: all ones
//   ScaledAbnormality  positives: scale_mask(abnormality); negatives: all ones
//   Periphery          periphery, united with the abnormality mask for positives
//   GazeDerived        gaze mask, united with the abnormality mask for positives
//   FullOnes           all ones
SegMask condition_mask(MaskKind kind, const LabeledSample& sample, const MaskContext& context);

}  // namespace maskdg
