#include "maskdg/synthbench.hpp"

#include "maskdg/eval.hpp"
#include "maskdg/masks.hpp"
#include "maskdg/seeding.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace maskdg {

namespace {

enum Stream : std::uint64_t { kLabel = 0, kGeometry = 1, kToken = 2, kNoise = 3, kDecoy = 4 };

std::mt19937_64 stream(const DomainSpec& spec, int index, Stream s) {
  return std::mt19937_64(derive_seed(spec.seed, {static_cast<std::uint64_t>(index), s}));
}

double uniform01(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

struct Placement {
  int radius;
  int row;
  int col;
};

Placement draw_placement(const BlobCatalog& catalog, std::mt19937_64& rng) {
  const std::size_t ri = std::uniform_int_distribution<std::size_t>(0, catalog.radii.size() - 1)(rng);
  const auto& centers = catalog.centers[ri];
  const std::size_t ci = std::uniform_int_distribution<std::size_t>(0, centers.size() - 1)(rng);
  return {catalog.radii[ri], centers[ci].first, centers[ci].second};
}

MaskRaster disk_raster(const BlobCatalog& catalog, const Placement& p, int size) {
  MaskRaster m = MaskRaster::Zero(size, size);
  for (auto [dr, dc] : catalog.disk_offsets(p.radius)) m(p.row + dr, p.col + dc) = 1;
  return m;
}

std::string sample_id(const std::string& domain_id, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d", index);
  return domain_id + "-" + buf;
}

}  // namespace

std::vector<std::pair<int, int>> BlobCatalog::disk_offsets(int radius) const {
  std::vector<std::pair<int, int>> out;
  for (int dr = -radius; dr <= radius; ++dr) {
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr * dr + dc * dc <= radius * radius) out.emplace_back(dr, dc);
    }
  }
  return out;
}

BlobCatalog blob_catalog(const DomainSpec& spec) {
  const MaskRaster annulus = annulus_raster(spec.image_size, spec.image_size, spec.r_inner, spec.r_outer);
  BlobCatalog catalog;
  for (int radius = spec.abn_radius_min; radius <= spec.abn_radius_max; ++radius) {
    const auto offsets = catalog.disk_offsets(radius);
    std::vector<std::pair<int, int>> centers;
    for (int r = radius; r < spec.image_size - radius; ++r) {
      for (int c = radius; c < spec.image_size - radius; ++c) {
        bool inside = true;
        for (auto [dr, dc] : offsets) {
          if (!annulus(r + dr, c + dc)) {
            inside = false;
            break;
          }
        }
        if (inside) centers.emplace_back(r, c);
      }
    }
    if (centers.empty()) throw Error(ErrorKind::Parameter, "no blob of radius " + std::to_string(radius) + " fits the annulus");
    catalog.radii.push_back(radius);
    catalog.centers.push_back(std::move(centers));
  }
  return catalog;
}

namespace {

LabeledSample make_sample(const DomainSpec& spec, const BlobCatalog& catalog, const MaskRaster& annulus, int index,
                          const std::string& domain_id) {
  const int size = spec.image_size;
  auto label_rng = stream(spec, index, kLabel);
  auto geometry_rng = stream(spec, index, kGeometry);
  auto token_rng = stream(spec, index, kToken);
  auto noise_rng = stream(spec, index, kNoise);

  const int label = uniform01(label_rng) < spec.class_balance ? 1 : 0;
  // Geometry is drawn for every sample so it never depends on the label
  // rate or any amplitude.
  const Placement blob = draw_placement(catalog, geometry_rng);
  const bool token = uniform01(token_rng) < spec.token_probability(label);

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(size, size);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double sd = annulus.data()[i] ? spec.noise_std : spec.outside_noise_std;
    x.data()[i] = spec.base_level + sd * noise(noise_rng);
  }

  std::optional<SegMask> abnormality;
  if (label == 1) {
    x += spec.bg_amplitude * annulus.cast<double>();
    MaskRaster disk = disk_raster(catalog, blob, size);
    x += spec.effective_abn_amplitude() * disk.cast<double>();
    abnormality = SegMask(std::move(disk));
  }
  if (token) {
    x.block(spec.sp_row, spec.sp_col, spec.sp_size, spec.sp_size).array() += spec.sp_amplitude;
  }
  ImageRaster image = x.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  return LabeledSample{sample_id(domain_id, index), Image(std::move(image)), label, std::move(abnormality), domain_id, {}};
}

}  // namespace

LabeledSample generate_sample(const DomainSpec& spec, int index, const std::string& domain_id) {
  spec.validate();
  const BlobCatalog catalog = blob_catalog(spec);
  const MaskRaster annulus = annulus_raster(spec.image_size, spec.image_size, spec.r_inner, spec.r_outer);
  return make_sample(spec, catalog, annulus, index, domain_id);
}

std::vector<LabeledSample> generate_domain(const DomainSpec& spec, int n, const std::string& domain_id) {
  if (n < 1) throw Error(ErrorKind::Parameter, "generate_domain needs n >= 1");
  spec.validate();
  const BlobCatalog catalog = blob_catalog(spec);
  const MaskRaster annulus = annulus_raster(spec.image_size, spec.image_size, spec.r_inner, spec.r_outer);
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(make_sample(spec, catalog, annulus, i, domain_id));
  return out;
}

BenchmarkSuite make_suite(const DomainSpec& base, double shifted_population) {
  base.validate();
  auto variant = [&](const std::string& name, double rho, double population, std::uint64_t stream_id) {
    DomainSpec s = base;
    s.rho_sp = rho;
    s.population = population;
    s.seed = stream_id == 0 ? base.seed : derive_seed(base.seed, {0x7a7a, stream_id});
    s.validate();
    return NamedDomain{name, s};
  };
  BenchmarkSuite suite;
  suite.source = variant("source", 1.0, base.population, 0);
  suite.targets = {
      variant("hospital-shift", 0.5, base.population, 1),
      variant("spurious-flip", 0.0, base.population, 2),
      variant("hospital-age", 0.5, shifted_population, 3),
      variant("flip-age", 0.0, shifted_population, 4),
  };
  return suite;
}

ImageRaster signal_template(const DomainSpec& spec) {
  spec.validate();
  const int size = spec.image_size;
  const BlobCatalog catalog = blob_catalog(spec);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> coverage =
      Eigen::MatrixXd::Zero(size, size);
  for (std::size_t ri = 0; ri < catalog.radii.size(); ++ri) {
    const auto offsets = catalog.disk_offsets(catalog.radii[ri]);
    const double weight = 1.0 / (catalog.radii.size() * catalog.centers[ri].size());
    for (auto [r, c] : catalog.centers[ri]) {
      for (auto [dr, dc] : offsets) coverage(r + dr, c + dc) += weight;
    }
  }
  const MaskRaster annulus = annulus_raster(size, size, spec.r_inner, spec.r_outer);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w =
      spec.bg_amplitude * annulus.cast<double>() + spec.effective_abn_amplitude() * coverage;
  w.block(spec.sp_row, spec.sp_col, spec.sp_size, spec.sp_size).array() += spec.sp_amplitude * spec.rho_sp;
  return w.cast<float>();
}

double oracle_auroc(std::span<const LabeledSample> samples, const DomainSpec& spec, MaskKind region,
                    int scale_block) {
  if (samples.empty()) throw Error(ErrorKind::DegenerateDataset, "oracle_auroc on an empty dataset");
  const ImageRaster w = signal_template(spec);
  const MaskRaster annulus = annulus_raster(spec.image_size, spec.image_size, spec.r_inner, spec.r_outer);
  const BlobCatalog catalog = blob_catalog(spec);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample& s = samples[i];
    MaskRaster r;
    Eigen::MatrixXd signal = w.cast<double>();
    switch (region) {
      case MaskKind::Periphery:
      case MaskKind::GazeDerived:
        r = annulus;
        break;
      case MaskKind::FullOnes:
        r = MaskRaster::Ones(spec.image_size, spec.image_size);
        break;
      case MaskKind::Abnormality:
      case MaskKind::ScaledAbnormality: {
        MaskRaster disk;
        if (s.label == 1 && s.abnormality_mask) {
          disk = s.abnormality_mask->values();
        } else {
          auto rng = stream(spec, static_cast<int>(i), kDecoy);
          disk = disk_raster(catalog, draw_placement(catalog, rng), spec.image_size);
        }
        signal = spec.bg_amplitude * annulus.cast<double>() + spec.effective_abn_amplitude() * disk.cast<double>();
        r = region == MaskKind::ScaledAbnormality ? scale_mask(disk, scale_block) : disk;
        break;
      }
    }
    const Eigen::ArrayXXd centered = s.image.values().cast<double>().array() - spec.base_level;
    const double score = (signal.array() * (centered - 0.5 * signal.array()) * r.cast<double>().array()).sum();
    scores.push_back(score);
    labels.push_back(s.label);
  }
  try {
    return auroc(scores, labels);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DegenerateLabels) throw Error(ErrorKind::DegenerateDataset, "oracle_auroc needs both classes");
    throw;
  }
}

std::vector<GazeSequence> simulate_gaze(const DomainSpec& spec, int n_sequences, int fixations_per_sequence,
                                        std::uint64_t seed, double on_task) {
  spec.validate();
  const MaskRaster annulus = annulus_raster(spec.image_size, spec.image_size, spec.r_inner, spec.r_outer);
  std::vector<std::pair<int, int>> ring;
  for (int r = 0; r < spec.image_size; ++r) {
    for (int c = 0; c < spec.image_size; ++c) {
      if (annulus(r, c)) ring.emplace_back(r, c);
    }
  }
  std::vector<GazeSequence> out;
  for (int s = 0; s < n_sequences; ++s) {
    std::mt19937_64 rng(derive_seed(seed, {0x6a7e, static_cast<std::uint64_t>(s)}));
    std::uniform_int_distribution<std::size_t> pick_ring(0, ring.size() - 1);
    std::uniform_int_distribution<int> pick_any(0, spec.image_size - 1);
    std::uniform_real_distribution<double> duration(0.1, 0.6);
    char id[32];
    std::snprintf(id, sizeof(id), "gaze-%05d", s);
    GazeSequence seq{id, {}};
    for (int f = 0; f < fixations_per_sequence; ++f) {
      Fixation fx;
      if (uniform01(rng) < on_task) {
        const auto [r, c] = ring[pick_ring(rng)];
        fx.row = r;
        fx.col = c;
      } else {
        fx.row = pick_any(rng);
        fx.col = pick_any(rng);
      }
      fx.duration = duration(rng);
      seq.fixations.push_back(fx);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace maskdg
