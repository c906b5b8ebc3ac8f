#pragma once

#include "maskdg/core.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace maskdg {

struct Fixation {
  double row = 0.0;  // pixels
  double col = 0.0;  // pixels
  double duration = 0.0;  // seconds, > 0
};

struct GazeSequence {
  std::string image_id;
  std::vector<Fixation> fixations;
};

struct GazeAggregate {
  Heatmap heatmap;
  int n_sequences = 0;
};

// Duration-weighted fixation density. A fixation lands on the pixel nearest
// to (row, col). sigma > 0 spreads it with an isotropic Gaussian truncated at
// 3 sigma and renormalized over the in-bounds part of the kernel, so the
// total mass always equals the summed durations; sigma == 0 deposits a point
// mass.
Heatmap rasterize_fixations(const GazeSequence& seq, int height, int width, double sigma);

Heatmap average_heatmaps(std::span<const Heatmap> maps);

GazeAggregate aggregate_gaze(std::span<const GazeSequence> sequences, int height, int width, double sigma);

// Smallest set of highest-valued pixels holding at least keep_fraction of
// the total mass; every pixel tied with the cut value is included.
SegMask threshold_heatmap(const Heatmap& heatmap, double keep_fraction);

// Fraction of total mass inside `mask`.
double mass_fraction(const Heatmap& heatmap, const SegMask& mask);

// Delimited gaze records, one fixation per line:
//   image_id,row,col,duration
// An optional header line starting with "image_id" is skipped. Records of
// one image_id form one sequence, in file order.
std::vector<GazeSequence> read_gaze_records(std::istream& in);
std::vector<GazeSequence> read_gaze_file(const std::string& path);
void write_gaze_records(std::ostream& out, std::span<const GazeSequence> sequences);

}  // namespace maskdg
