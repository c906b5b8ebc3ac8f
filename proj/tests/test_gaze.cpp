#include "maskdg/gaze.hpp"
#include "maskdg/masks.hpp"
#include "maskdg/synthbench.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace maskdg;

namespace {

GazeSequence random_sequence(int h, int w, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> row(0.0, h - 1), col(0.0, w - 1), dur(0.05, 1.0);
  GazeSequence s{"s", {}};
  for (int i = 0; i < n; ++i) s.fixations.push_back({row(rng), col(rng), dur(rng)});
  return s;
}

Heatmap random_heatmap(int h, int w, std::mt19937_64& rng, double zero_fraction = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HeatRaster v(h, w);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = u(rng) < zero_fraction ? 0.0 : std::round(u(rng) * 8.0);
  v(0, 0) = 1.0;
  return Heatmap(v);
}

// Sort values descending and accumulate until the goal mass is reached;
// the mask is every pixel at or above the last accumulated value.
MaskRaster sort_and_accumulate(const HeatRaster& v, double keep) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.rbegin(), s.rend());
  const double total = std::accumulate(s.begin(), s.end(), 0.0);
  double cum = 0.0, cut = s.front();
  for (double x : s) {
    if (x <= 0.0) break;
    cum += x;
    cut = x;
    if (cum >= keep * total - 1e-12 * total) break;
  }
  MaskRaster m(v.rows(), v.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) m.data()[i] = v.data()[i] >= cut ? 1 : 0;
  return m;
}

}  // namespace

TEST_SUITE("gaze") {
  TEST_CASE("a single point fixation") {
    const GazeSequence s{"a", {{3.0, 4.0, 2.0}}};
    const Heatmap h = rasterize_fixations(s, 10, 10, 0.0);
    CHECK(h.values()(3, 4) == 2.0);
    CHECK(h.total() == 2.0);
    CHECK((h.values().array() != 0.0).count() == 1);
  }

  TEST_CASE("point mass conserves the summed duration") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      const GazeSequence s = random_sequence(20, 30, 25, rng);
      double total = 0.0;
      for (const Fixation& f : s.fixations) total += f.duration;
      CHECK(rasterize_fixations(s, 20, 30, 0.0).total() == doctest::Approx(total).epsilon(1e-12));
    }
  }

  TEST_CASE("Gaussian spreading matches the truncated-kernel oracle") {
    const double sigma = 2.0, duration = 1.7;
    const GazeSequence s{"a", {{20.0, 20.0, duration}}};
    const Heatmap h = rasterize_fixations(s, 40, 40, sigma);
    CHECK(std::abs(h.total() - duration) <= 1e-6);
    double z = 0.0;
    for (int dr = -6; dr <= 6; ++dr) {
      for (int dc = -6; dc <= 6; ++dc) {
        if (std::hypot(dr, dc) <= 3.0 * sigma) z += std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      }
    }
    CHECK(h.values()(20, 20) == doctest::Approx(duration / z).epsilon(1e-12));
    CHECK(h.values()(20, 23) == doctest::Approx(duration * std::exp(-9.0 / 8.0) / z).epsilon(1e-12));
    CHECK(h.values()(20, 27) == 0.0);  // beyond 3 sigma

    // Near a border the in-bounds part is renormalized.
    const Heatmap edge = rasterize_fixations(GazeSequence{"b", {{0.0, 1.0, duration}}}, 40, 40, sigma);
    CHECK(std::abs(edge.total() - duration) <= 1e-6);
  }

  TEST_CASE("property: mass conservation within 1e-6 relative") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      const GazeSequence s = random_sequence(24, 24, 10, rng);
      const double sigma = std::uniform_real_distribution<double>(0.3, 4.0)(rng);
      double total = 0.0;
      for (const Fixation& f : s.fixations) total += f.duration;
      REQUIRE(std::abs(rasterize_fixations(s, 24, 24, sigma).total() - total) <= 1e-6 * total);
    }
  }

  TEST_CASE("invalid fixations") {
    for (Fixation f : {Fixation{-1.0, 0.0, 1.0}, Fixation{0.0, 10.0, 1.0}, Fixation{2.0, 2.0, 0.0}}) {
      try {
        rasterize_fixations(GazeSequence{"x", {f}}, 10, 10, 1.0);
        FAIL("expected an error");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidFixation);
      }
    }
    CHECK_THROWS_AS(rasterize_fixations(GazeSequence{"x", {}}, 10, 10, -1.0), Error);
  }

  TEST_CASE("average_heatmaps") {
    std::mt19937_64 rng(3);
    const Heatmap m = random_heatmap(6, 7, rng);
    const Heatmap one[] = {m};
    CHECK(average_heatmaps(one).values() == m.values());
    const Heatmap pair[] = {m, Heatmap::zeros(6, 7)};
    CHECK(average_heatmaps(pair).values().isApprox(m.values() / 2.0));

    std::vector<Heatmap> maps;
    for (int i = 0; i < 5; ++i) maps.push_back(random_heatmap(6, 7, rng));
    const Heatmap avg = average_heatmaps(maps);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 7; ++c) {
        double sum = 0.0;
        for (const Heatmap& h : maps) sum += h.values()(r, c);
        CHECK(avg.values()(r, c) == doctest::Approx(sum / 5.0).epsilon(1e-12));
      }
    }
    CHECK_THROWS_AS(average_heatmaps(std::span<const Heatmap>{}), Error);
    const Heatmap mismatched[] = {m, Heatmap::zeros(7, 6)};
    CHECK_THROWS_AS(average_heatmaps(mismatched), Error);
  }

  TEST_CASE("aggregation is invariant to sequence order") {
    std::mt19937_64 rng(4);
    std::vector<GazeSequence> seqs;
    for (int i = 0; i < 6; ++i) seqs.push_back(random_sequence(16, 16, 8, rng));
    const GazeAggregate a = aggregate_gaze(seqs, 16, 16, 1.5);
    std::reverse(seqs.begin(), seqs.end());
    std::swap(seqs[1], seqs[4]);
    const GazeAggregate b = aggregate_gaze(seqs, 16, 16, 1.5);
    CHECK(a.n_sequences == 6);
    CHECK(a.heatmap.values().isApprox(b.heatmap.values(), 1e-14));
    try {
      aggregate_gaze(std::span<const GazeSequence>{}, 16, 16, 1.0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateHeatmap);
    }
  }

  TEST_CASE("threshold_heatmap examples") {
    HeatRaster v(1, 4);
    v << 4, 3, 2, 1;
    MaskRaster want(1, 4);
    want << 1, 1, 0, 0;
    CHECK(threshold_heatmap(Heatmap(v), 0.7).values() == want);
    CHECK(sort_and_accumulate(v, 0.7) == want);

    const Heatmap uniform(HeatRaster::Constant(4, 4, 0.25));
    CHECK(threshold_heatmap(uniform, 0.5) == SegMask::ones(4, 4));

    std::mt19937_64 rng(5);
    const Heatmap h = random_heatmap(9, 9, rng);
    const SegMask support((h.values().array() > 0.0).cast<std::uint8_t>().matrix());
    CHECK(threshold_heatmap(h, 1.0) == support);

    try {
      threshold_heatmap(Heatmap::zeros(4, 4), 0.5);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateHeatmap);
    }
    CHECK_THROWS_AS(threshold_heatmap(h, 0.0), Error);
    CHECK_THROWS_AS(threshold_heatmap(h, 1.5), Error);
  }

  TEST_CASE("threshold_heatmap matches the sort-and-accumulate oracle") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 500; ++trial) {
      const Heatmap h = random_heatmap(7, 8, rng, 0.2);
      const double keep = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
      const SegMask m = threshold_heatmap(h, keep);
      REQUIRE(m.values() == sort_and_accumulate(h.values(), keep));
      REQUIRE(mass_fraction(h, m) >= keep - 1e-9);
    }
  }

  TEST_CASE("gaze records round trip and report the failing line") {
    std::mt19937_64 rng(7);
    std::vector<GazeSequence> seqs{random_sequence(10, 10, 3, rng), random_sequence(10, 10, 2, rng)};
    seqs[0].image_id = "img-a";
    seqs[1].image_id = "img-b";
    std::stringstream buf;
    write_gaze_records(buf, seqs);
    const auto back = read_gaze_records(buf);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].image_id == seqs[i].image_id);
      REQUIRE(back[i].fixations.size() == seqs[i].fixations.size());
      for (std::size_t j = 0; j < back[i].fixations.size(); ++j) {
        CHECK(back[i].fixations[j].row == seqs[i].fixations[j].row);
        CHECK(back[i].fixations[j].duration == seqs[i].fixations[j].duration);
      }
    }
    std::stringstream bad("image_id,row,col,duration\na,1,2,0.5\na,1,oops,0.5\n");
    try {
      read_gaze_records(bad);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::stringstream empty("");
    CHECK(read_gaze_records(empty).empty());
  }
}

TEST_SUITE("masking") {
  TEST_CASE("property: threshold_heatmap is monotone in keep_fraction over 1000 cases") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.001, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const Heatmap h = random_heatmap(6, 6, rng, 0.25);
      double k1 = u(rng), k2 = u(rng);
      if (k1 > k2) std::swap(k1, k2);
      REQUIRE(threshold_heatmap(h, k2).contains(threshold_heatmap(h, k1)));
    }
  }
}

TEST_SUITE("gaze-end-to-end") {
  TEST_CASE("simulated periphery gaze recovers the annulus") {
    DomainSpec spec;
    const SegMask truth = periphery_mask(spec);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto seqs = simulate_gaze(spec, 40, 30, seed);
      const GazeAggregate agg = aggregate_gaze(seqs, spec.image_size, spec.image_size, 2.0);
      const SegMask mask = threshold_heatmap(agg.heatmap, 0.8);
      const double iou = oracle::iou(mask.values(), truth.values());
      INFO("seed " << seed << " IoU " << iou);
      CHECK(iou >= 0.5);
    }
  }

  TEST_CASE("the pipeline survives a trip through the record format") {
    DomainSpec spec;
    const auto seqs = simulate_gaze(spec, 40, 30, 11);
    std::stringstream buf;
    write_gaze_records(buf, seqs);
    const auto back = read_gaze_records(buf);
    const SegMask a = threshold_heatmap(aggregate_gaze(seqs, 64, 64, 2.0).heatmap, 0.8);
    const SegMask b = threshold_heatmap(aggregate_gaze(back, 64, 64, 2.0).heatmap, 0.8);
    CHECK(a == b);
  }
}
