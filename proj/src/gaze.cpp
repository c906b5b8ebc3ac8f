#include "maskdg/gaze.hpp"

#include "maskdg/text_format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>

namespace maskdg {

namespace {

std::pair<int, int> fixation_pixel(const Fixation& f, int height, int width) {
  const int r = static_cast<int>(std::lround(f.row));
  const int c = static_cast<int>(std::lround(f.col));
  if (!std::isfinite(f.row) || !std::isfinite(f.col) || r < 0 || r >= height || c < 0 || c >= width) {
    throw Error(ErrorKind::InvalidFixation,
                "fixation (" + format_real(f.row) + ", " + format_real(f.col) + ") outside " +
                    std::to_string(height) + "x" + std::to_string(width));
  }
  if (!(f.duration > 0.0) || !std::isfinite(f.duration)) {
    throw Error(ErrorKind::InvalidFixation, "fixation duration must be positive");
  }
  return {r, c};
}

}  // namespace

Heatmap rasterize_fixations(const GazeSequence& seq, int height, int width, double sigma) {
  if (!(sigma >= 0.0)) throw Error(ErrorKind::Parameter, "sigma must be >= 0");
  if (height < 1 || width < 1) throw Error(ErrorKind::Parameter, "heatmap needs a positive size");
  HeatRaster h = HeatRaster::Zero(height, width);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  for (const Fixation& f : seq.fixations) {
    const auto [r0, c0] = fixation_pixel(f, height, width);
    if (sigma == 0.0) {
      h(r0, c0) += f.duration;
      continue;
    }
    double total = 0.0;
    std::vector<std::tuple<int, int, double>> taps;
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        const double d2 = double(dr) * dr + double(dc) * dc;
        const int r = r0 + dr, c = c0 + dc;
        if (d2 > 9.0 * sigma * sigma || r < 0 || r >= height || c < 0 || c >= width) continue;
        const double w = std::exp(-d2 / (2.0 * sigma * sigma));
        taps.emplace_back(r, c, w);
        total += w;
      }
    }
    for (auto [r, c, w] : taps) h(r, c) += f.duration * w / total;
  }
  return Heatmap(std::move(h));
}

Heatmap average_heatmaps(std::span<const Heatmap> maps) {
  if (maps.empty()) throw Error(ErrorKind::Parameter, "average_heatmaps needs at least one heatmap");
  HeatRaster sum = HeatRaster::Zero(maps.front().height(), maps.front().width());
  for (const Heatmap& m : maps) {
    if (m.height() != sum.rows() || m.width() != sum.cols()) {
      throw Error(ErrorKind::InconsistentSample, "average_heatmaps shape mismatch");
    }
    sum += m.values();
  }
  return Heatmap(sum / static_cast<double>(maps.size()));
}

GazeAggregate aggregate_gaze(std::span<const GazeSequence> sequences, int height, int width, double sigma) {
  if (sequences.empty()) throw Error(ErrorKind::DegenerateHeatmap, "no gaze sequences");
  std::vector<Heatmap> maps;
  maps.reserve(sequences.size());
  for (const GazeSequence& s : sequences) maps.push_back(rasterize_fixations(s, height, width, sigma));
  return {average_heatmaps(maps), static_cast<int>(sequences.size())};
}

SegMask threshold_heatmap(const Heatmap& heatmap, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw Error(ErrorKind::Parameter, "keep_fraction must lie in (0,1]");
  }
  const HeatRaster& v = heatmap.values();
  const double total = v.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateHeatmap, "heatmap has zero mass");
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double goal = keep_fraction * total * (1.0 - 1e-12);
  double cum = 0.0;
  double cut = sorted.front();
  for (double x : sorted) {
    if (x <= 0.0) break;
    cum += x;
    cut = x;
    if (cum >= goal) break;
  }
  MaskRaster m = (v.array() >= cut).cast<std::uint8_t>();
  return SegMask(std::move(m));
}

double mass_fraction(const Heatmap& heatmap, const SegMask& mask) {
  const double total = heatmap.total();
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateHeatmap, "heatmap has zero mass");
  return (heatmap.values().array() * mask.values().cast<double>().array()).sum() / total;
}

std::vector<GazeSequence> read_gaze_records(std::istream& in) {
  std::vector<GazeSequence> out;
  std::map<std::string, std::size_t> index;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line.starts_with("image_id")) continue;
    const auto f = split(line, ',');
    if (f.size() != 4 || trim(f[0]).empty()) {
      throw Error(ErrorKind::Parse, "gaze record line " + std::to_string(line_no) + ": expected image_id,row,col,duration");
    }
    Fixation fx;
    try {
      fx.row = parse_real(f[1], "row");
      fx.col = parse_real(f[2], "col");
      fx.duration = parse_real(f[3], "duration");
    } catch (const Error& e) {
      throw Error(ErrorKind::Parse, "gaze record line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!(fx.duration > 0.0)) {
      throw Error(ErrorKind::InvalidFixation, "gaze record line " + std::to_string(line_no) + ": duration must be positive");
    }
    const std::string id(trim(f[0]));
    auto [it, inserted] = index.try_emplace(id, out.size());
    if (inserted) out.push_back(GazeSequence{id, {}});
    out[it->second].fixations.push_back(fx);
  }
  return out;
}

std::vector<GazeSequence> read_gaze_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open gaze file " + path);
  return read_gaze_records(in);
}

void write_gaze_records(std::ostream& out, std::span<const GazeSequence> sequences) {
  out << "image_id,row,col,duration\n";
  for (const GazeSequence& s : sequences) {
    for (const Fixation& f : s.fixations) {
      out << s.image_id << ',' << format_real(f.row) << ',' << format_real(f.col) << ',' << format_real(f.duration) << '\n';
    }
  }
}

}  // namespace maskdg
