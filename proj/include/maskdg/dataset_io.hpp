#pragma once

// On-disk dataset layout:
//
//   <dir>/manifest.txt
//   <dir>/images/<id>.f32
//   <dir>/masks/<kind>/<id>.f32      kind in {abnormality, scaled, periphery, gaze}
//
// Raster files (.f32): the 8 bytes "MDGRAST1", height and width as uint32
// little-endian, then height*width float32 little-endian values, row-major.
// Masks use the same format with values 0 and 1.
//
// manifest.txt: "key = value" header lines (format, name, split, samples and
// the DomainSpec fields prefixed "spec."), then a line "[samples]" followed
// by one tab-separated record per sample:
//
//   id  label  domain_id  image_path  masks
//
// where masks is "-" or a comma-separated list of kind=path entries. Paths
// are relative to the manifest's directory.

#include "maskdg/core.hpp"
#include "maskdg/domain_spec.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace maskdg {

struct Dataset {
  std::string name;
  std::string split;
  DomainSpec spec;
  std::vector<LabeledSample> samples;
};

inline constexpr char kRasterMagic[] = "MDGRAST1";
inline constexpr char kManifestName[] = "manifest.txt";

void write_raster(const std::filesystem::path& path, const ImageRaster& values);
ImageRaster read_raster(const std::filesystem::path& path);

// Validates every sample before anything is written. Returns the manifest
// path. Output bytes depend only on the dataset.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);

// Accepts the manifest file or its directory. Samples come back in manifest
// order with all invariants checked.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace maskdg
