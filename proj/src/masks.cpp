#include "maskdg/masks.hpp"

#include <cmath>

namespace maskdg {

Image apply_shuffle_mask(const Image& x, const SegMask& seg, std::uint64_t seed) {
  check_same_shape(x, seg);
  return Image(apply_shuffle_mask(x.values(), seg.values(), seed));
}

MaskRaster scale_mask(const MaskRaster& seg, int block) {
  if (block <= 0) throw Error(ErrorKind::Parameter, "scale_mask block must be >= 1");
  const Eigen::Index h = seg.rows(), w = seg.cols();
  MaskRaster out = MaskRaster::Zero(h, w);
  for (Eigen::Index r0 = 0; r0 < h; r0 += block) {
    const Eigen::Index bh = std::min<Eigen::Index>(block, h - r0);
    for (Eigen::Index c0 = 0; c0 < w; c0 += block) {
      const Eigen::Index bw = std::min<Eigen::Index>(block, w - c0);
      if ((seg.block(r0, c0, bh, bw).array() != 0).any()) out.block(r0, c0, bh, bw).setOnes();
    }
  }
  return out;
}

SegMask scale_mask(const SegMask& seg, int block) { return SegMask(scale_mask(seg.values(), block)); }

MaskRaster annulus_raster(int height, int width, double r_inner, double r_outer) {
  if (!(r_inner < r_outer)) throw Error(ErrorKind::Parameter, "annulus needs r_inner < r_outer");
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  MaskRaster out(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double d = std::hypot(r - cy, c - cx);
      out(r, c) = (d >= r_inner && d <= r_outer) ? 1 : 0;
    }
  }
  return out;
}

SegMask periphery_mask(const DomainSpec& spec) {
  if (spec.r_inner >= spec.r_outer) throw Error(ErrorKind::Parameter, "periphery mask needs r_inner < r_outer");
  SegMask mask(annulus_raster(spec.image_size, spec.image_size, spec.r_inner, spec.r_outer));
  if (mask.popcount() == 0) throw Error(ErrorKind::Parameter, "periphery annulus covers no pixel centers");
  return mask;
}

MaskRaster union_mask(const MaskRaster& a, const MaskRaster& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::InconsistentSample, "union_mask shape mismatch");
  }
  return a.cwiseMax(b);
}

SegMask union_mask(const SegMask& a, const SegMask& b) { return SegMask(union_mask(a.values(), b.values())); }

SegMask condition_mask(MaskKind kind, const LabeledSample& sample, const MaskContext& context) {
  const int h = sample.image.height(), w = sample.image.width();
  const bool positive = sample.label == 1 && sample.abnormality_mask.has_value();
  switch (kind) {
    case MaskKind::FullOnes:
      return SegMask::ones(h, w);
    case MaskKind::Abnormality:
      return positive ? *sample.abnormality_mask : SegMask::ones(h, w);
    case MaskKind::ScaledAbnormality:
      if (!positive) return SegMask::ones(h, w);
      if (auto it = sample.region_masks.find(kind); it != sample.region_masks.end()) return it->second;
      return scale_mask(*sample.abnormality_mask, context.scale_block);
    case MaskKind::Periphery:
      check_same_shape(sample.image, context.periphery);
      return positive ? union_mask(context.periphery, *sample.abnormality_mask) : context.periphery;
    case MaskKind::GazeDerived:
      if (!context.gaze) throw Error(ErrorKind::Parameter, "gaze mask condition requires a gaze mask");
      check_same_shape(sample.image, *context.gaze);
      return positive ? union_mask(*context.gaze, *sample.abnormality_mask) : *context.gaze;
  }
  throw Error(ErrorKind::Parameter, "unknown mask kind");
}

}  // namespace maskdg
