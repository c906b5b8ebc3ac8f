#pragma once

#include "maskdg/core.hpp"
#include "maskdg/domain_spec.hpp"
#include "maskdg/gaze.hpp"
#include "maskdg/masks.hpp"

#include <span>
#include <string>
#include <vector>

namespace maskdg {

// Synthetic stand-in for a radiograph population. Every image is
//   base_level + noise (noise_std on the annulus, outside_noise_std elsewhere)
//   + bg_amplitude on the annulus                    (positives)
//   + effective_abn_amplitude on a disk in annulus   (positives; the mask)
//   + sp_amplitude on the corner token               (with P(token | label))
// clamped to [0, 1]. Each sample draws from its own seeded streams, so
// sample i is the same whether generated alone, in order or in parallel.
std::vector<LabeledSample> generate_domain(const DomainSpec& spec, int n, const std::string& domain_id = "domain");

LabeledSample generate_sample(const DomainSpec& spec, int index, const std::string& domain_id);

// Every disk placement the generator can draw, with its exact support.
struct BlobCatalog {
  std::vector<int> radii;
  std::vector<std::vector<std::pair<int, int>>> centers;  // per radius
  std::vector<std::pair<int, int>> disk_offsets(int radius) const;
};
BlobCatalog blob_catalog(const DomainSpec& spec);

struct NamedDomain {
  std::string name;
  DomainSpec spec;
};

// One source plus exactly four targets sharing the source geometry.
struct BenchmarkSuite {
  NamedDomain source;
  std::vector<NamedDomain> targets;
};

// Targets, in order:
//   hospital-shift  rho_sp = 0.5, population unchanged
//   spurious-flip   rho_sp = 0.0, population unchanged
//   hospital-age    rho_sp = 0.5, population = shifted_population
//   flip-age        rho_sp = 0.0, population = shifted_population
// The source always uses rho_sp = +1.
BenchmarkSuite make_suite(const DomainSpec& base, double shifted_population = 0.5);

// Expected per-pixel signal difference E[x | y=1] - E[x | y=0] (ignoring
// clamping), the matched-filter template of the generator.
ImageRaster signal_template(const DomainSpec& spec);

// AUROC of the Gaussian log-likelihood-ratio scorer
// sum_{p in region} w_p (x_p - base_level - w_p / 2) with region:
//   Periphery / GazeDerived  the annulus, w = signal_template
//   Abnormality              the sample's own blob support; negatives use a
//                            decoy disk drawn from the blob catalog. w is the
//                            known signal of that disk (blob plus annulus)
//   ScaledAbnormality        as Abnormality, coarsened by `scale_block`
//   FullOnes                 every pixel, w = signal_template
double oracle_auroc(std::span<const LabeledSample> samples, const DomainSpec& spec, MaskKind region,
                    int scale_block = kDefaultScaleBlock);

// Simulated expert gaze: each fixation lands on a uniformly drawn annulus
// pixel with probability `on_task`, else anywhere in the image; durations are
// uniform in [0.1, 0.6] s.
std::vector<GazeSequence> simulate_gaze(const DomainSpec& spec, int n_sequences, int fixations_per_sequence,
                                        std::uint64_t seed, double on_task = 0.85);

}  // namespace maskdg
