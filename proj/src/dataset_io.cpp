#include "maskdg/dataset_io.hpp"

#include "maskdg/text_format.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <sstream>

namespace maskdg {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "raster IO assumes a little-endian host");

namespace {

constexpr std::size_t kMagicSize = sizeof(kRasterMagic) - 1;
constexpr std::size_t kHeaderSize = kMagicSize + 8;

void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

std::uint32_t read_u32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, 4);
  return v;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

ImageRaster mask_to_raster(const SegMask& mask) { return mask.values().cast<float>(); }

SegMask raster_to_mask(const ImageRaster& r, const fs::path& path) {
  MaskRaster m(r.rows(), r.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const float v = r.data()[i];
    if (v != 0.0f && v != 1.0f) {
      throw Error(ErrorKind::InvalidMask, path.string() + ": non-binary value at flat index " + std::to_string(i));
    }
    m.data()[i] = static_cast<std::uint8_t>(v);
  }
  return SegMask(std::move(m));
}

std::string mask_path(MaskKind kind, const std::string& id) {
  return "masks/" + std::string(storage_name(kind)) + "/" + id + ".f32";
}

bool valid_id(const std::string& id) {
  if (id.empty()) return false;
  for (char c : id) {
    if (c == '/' || c == '\\' || c == '\t' || c == '\n' || c == ',' || c == '=') return false;
  }
  return id != "." && id != "..";
}

}  // namespace

void write_raster(const fs::path& path, const ImageRaster& values) {
  std::string bytes(kRasterMagic, kMagicSize);
  append_u32(bytes, static_cast<std::uint32_t>(values.rows()));
  append_u32(bytes, static_cast<std::uint32_t>(values.cols()));
  bytes.append(reinterpret_cast<const char*>(values.data()), static_cast<std::size_t>(values.size()) * sizeof(float));
  write_text_file(path.string(), bytes);
}

ImageRaster read_raster(const fs::path& path) {
  const std::string bytes = read_text_file(path.string());
  if (bytes.size() < kHeaderSize || bytes.compare(0, kMagicSize, kRasterMagic) != 0) {
    throw Error(ErrorKind::Parse, path.string() + ": not a raster file");
  }
  const std::uint32_t h = read_u32(bytes, kMagicSize), w = read_u32(bytes, kMagicSize + 4);
  const std::size_t expected = kHeaderSize + std::size_t(h) * w * sizeof(float);
  if (bytes.size() != expected) {
    throw Error(ErrorKind::Parse, path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                                      std::to_string(bytes.size()));
  }
  ImageRaster r(h, w);
  std::memcpy(r.data(), bytes.data() + kHeaderSize, std::size_t(h) * w * sizeof(float));
  return r;
}

fs::path save_dataset(const Dataset& dataset, const fs::path& out_dir) {
  dataset.spec.validate();
  for (const auto& s : dataset.samples) {
    s.validate();
    if (!valid_id(s.id)) throw Error(ErrorKind::Parameter, "sample id '" + s.id + "' cannot be used as a file name");
  }

  ensure_directory(out_dir / "images");
  std::vector<std::pair<std::string, std::string>> header = {
      {"format", "maskdg-dataset v1"},
      {"name", dataset.name},
      {"split", dataset.split},
      {"samples", format_int(static_cast<long long>(dataset.samples.size()))},
  };
  for (const auto& [k, v] : dataset.spec.to_fields()) header.emplace_back("spec." + k, v);

  std::string table = "[samples]\n";
  for (const auto& s : dataset.samples) {
    const std::string image_rel = "images/" + s.id + ".f32";
    write_raster(out_dir / image_rel, s.image.values());
    std::string masks;
    auto add_mask = [&](MaskKind kind, const SegMask& m) {
      const std::string rel = mask_path(kind, s.id);
      ensure_directory((out_dir / rel).parent_path());
      write_raster(out_dir / rel, mask_to_raster(m));
      masks += (masks.empty() ? "" : ",") + std::string(storage_name(kind)) + "=" + rel;
    };
    if (s.abnormality_mask) add_mask(MaskKind::Abnormality, *s.abnormality_mask);
    for (const auto& [kind, m] : s.region_masks) add_mask(kind, m);
    table += s.id + "\t" + format_int(s.label) + "\t" + s.domain_id + "\t" + image_rel + "\t" +
             (masks.empty() ? "-" : masks) + "\n";
  }
  const fs::path manifest = out_dir / kManifestName;
  write_text_file(manifest.string(), render_key_values(header) + table);
  return manifest;
}

Dataset load_dataset(const fs::path& manifest_path) {
  fs::path manifest = manifest_path;
  if (fs::is_directory(manifest)) manifest /= kManifestName;
  if (!fs::is_regular_file(manifest)) throw Error(ErrorKind::ManifestNotFound, manifest.string());
  const fs::path root = manifest.parent_path();
  const std::string text = read_text_file(manifest.string());

  const auto marker = text.find("[samples]\n");
  if (marker == std::string::npos) throw Error(ErrorKind::Parse, manifest.string() + ": missing [samples] section");
  const auto header = parse_key_values(std::string_view(text).substr(0, marker), manifest.string());
  auto field = [&](const std::string& key) {
    const auto it = header.find(key);
    if (it == header.end()) throw Error(ErrorKind::Parse, manifest.string() + ": missing '" + key + "'");
    return it->second;
  };
  if (field("format") != "maskdg-dataset v1") throw Error(ErrorKind::Parse, manifest.string() + ": unsupported format");

  Dataset d;
  d.name = field("name");
  d.split = field("split");
  std::map<std::string, std::string> spec_fields;
  for (const auto& [k, v] : header) {
    if (k.starts_with("spec.")) spec_fields[k.substr(5)] = v;
  }
  d.spec = DomainSpec::from_fields(spec_fields);
  d.spec.validate();
  const long long count = parse_int(field("samples"), "samples");

  std::istringstream rows(text.substr(marker + 10));
  std::string line;
  int line_no = 0;
  while (std::getline(rows, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = manifest.string() + ": sample record " + std::to_string(line_no);
    const auto f = split(line, '\t');
    if (f.size() != 5) throw Error(ErrorKind::Parse, where + ": expected 5 tab-separated fields");
    const long long label = parse_int(f[1], "label");
    if (label != 0 && label != 1) throw Error(ErrorKind::InvalidLabel, where + ": label " + f[1]);
    LabeledSample s{f[0], Image(read_raster(root / f[3])), static_cast<int>(label), std::nullopt, f[2], {}};
    if (f[4] != "-") {
      for (const std::string& entry : split(f[4], ',')) {
        const auto kv = split(entry, '=');
        if (kv.size() != 2) throw Error(ErrorKind::Parse, where + ": bad mask entry '" + entry + "'");
        const MaskKind kind = parse_mask_kind(kv[0]);
        SegMask m = raster_to_mask(read_raster(root / kv[1]), root / kv[1]);
        check_same_shape(s.image, m);
        if (kind == MaskKind::Abnormality) {
          s.abnormality_mask = std::move(m);
        } else {
          s.region_masks.insert_or_assign(kind, std::move(m));
        }
      }
    }
    s.validate();
    d.samples.push_back(std::move(s));
  }
  if (static_cast<long long>(d.samples.size()) != count) {
    throw Error(ErrorKind::Parse, manifest.string() + ": header declares " + std::to_string(count) + " samples, found " +
                                      std::to_string(d.samples.size()));
  }
  return d;
}

}  // namespace maskdg
