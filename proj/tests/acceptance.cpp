// Acceptance driver: prints one PASS/FAIL line per acceptance criterion and
// exits nonzero if any fails.
//
// Criteria 1-4 and 8 run the matching doctest suites in-process under a
// wall-clock budget. Criteria 5-7 run the three experiment suites on the
// synthetic benchmark; every training run is cached under the work directory,
// so a second invocation only re-reads results. Criterion 9 retrains two
// cells from scratch and compares them with the recorded per-seed AUROCs.
//
// Usage: acceptance [--work DIR] [--workers N]
// The work directory defaults to MASKDG_ACCEPTANCE_DIR.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "maskdg/experiment.hpp"
#include "maskdg/synthbench.hpp"
#include "maskdg/text_format.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>

using namespace maskdg;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kSuiteBudgetSeconds = 60.0;
constexpr int kSourceTrainVal = 1170;    // 1000 train + 170 validation
constexpr int kScaledTrainVal = 8540;    // about 7x the training samples
constexpr int kTestPerDomain = 1000;
constexpr std::uint64_t kBenchmarkSeed = 0;
constexpr const char* kFlipTarget = "spurious-flip";
constexpr int kOrderingTargetsNeeded = 3;
constexpr int kDisjointTargetsNeeded = 2;
constexpr int kScalingTargetsNeeded = 3;

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void print_verdict(int id, const std::string& title, const Verdict& v) {
  std::printf("[%s] %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.c_str());
  std::fflush(stdout);
}

Verdict run_suite(const std::string& suite, const fs::path& log) {
  const auto start = Clock::now();
  doctest::Context context;
  context.setOption("test-suite", suite.c_str());
  context.setOption("out", log.string().c_str());
  context.setOption("no-breaks", true);
  const int failed = context.run();
  const double secs = seconds_since(start);
  const bool ran = failed == 0 && secs < kSuiteBudgetSeconds;
  return {ran, "suite '" + suite + "' " + (failed == 0 ? "passed" : "FAILED (see " + log.string() + ")") + " in " +
                   format_fixed(secs, 2) + " s (budget " + format_fixed(kSuiteBudgetSeconds, 0) + " s)"};
}

BenchmarkData load_or_generate(const fs::path& dir, int n_train_val) {
  if (fs::exists(dir / "source" / "train" / kManifestName)) return load_benchmark(dir);
  DomainSpec spec;
  spec.seed = kBenchmarkSeed;
  BenchmarkData data = generate_benchmark(spec, n_train_val, kTestPerDomain);
  save_benchmark(data, dir);
  return data;
}

const ReportRow* find_row(const EvalReport& report, const std::string& dataset, const std::string& method,
                          const std::string& mask) {
  for (const ReportRow& r : report.rows) {
    if (r.dataset == dataset && r.method == method && r.mask_kind == mask) return &r;
  }
  return nullptr;
}

std::string cell(const ReportRow& r) {
  return format_fixed(r.mean, 2) + (r.half_width ? "±" + format_fixed(*r.half_width, 2) : "");
}

ExperimentOutcome run_suite_experiment(ExperimentPlan plan, const BenchmarkData& data, const fs::path& work,
                                       const std::string& name, int workers) {
  plan.cache_dir = work / "cache";
  plan.workers = workers;
  const auto start = Clock::now();
  ExperimentOutcome out = run_experiment(plan, data, work / name, [](const std::string& line) {
    std::fprintf(stderr, "%s\n", line.c_str());
  });
  std::fprintf(stderr, "%s finished in %.1f s\n", name.c_str(), seconds_since(start));
  return out;
}

Verdict baseline_verdict(const ExperimentOutcome& out) {
  // The allowed excess is the half-width of ERM's interval.
  const ReportRow* erm = find_row(out.report, kFlipTarget, "ERM", "none");
  if (!erm || !erm->half_width) return {false, "no multi-seed ERM row on " + std::string(kFlipTarget)};
  Verdict v{true, "on " + std::string(kFlipTarget) + ": ERM " + cell(*erm)};
  for (const char* method : {"ActDiff", "RRR"}) {
    const ReportRow* r = find_row(out.report, kFlipTarget, method, "abnormality");
    if (!r) return {false, std::string("missing row for ") + method};
    const double excess = r->mean - erm->mean;
    const bool ok = excess <= *erm->half_width;
    v.pass = v.pass && ok;
    v.detail += std::string(", ") + method + " " + cell(*r) + " (excess " + format_fixed(excess, 2) + " vs hw " +
                format_fixed(*erm->half_width, 2) + (ok ? ")" : ", exceeds)");
  }
  if (!out.failures.empty()) {
    v.pass = false;
    v.detail += ", " + std::to_string(out.failures.size()) + " failed runs";
  }
  return v;
}

Verdict mask_comparison_verdict(const ExperimentOutcome& out, const std::vector<std::string>& targets) {
  int ordered = 0, disjoint = 0;
  std::string detail;
  for (const std::string& t : targets) {
    const ReportRow* p = find_row(out.report, t, "ActDiff", "periphery");
    const ReportRow* s = find_row(out.report, t, "ActDiff", "scaled");
    const ReportRow* a = find_row(out.report, t, "ActDiff", "abnormality");
    if (!p || !s || !a || !p->half_width || !a->half_width) return {false, "missing ActDiff rows on " + t};
    const bool order = p->mean > s->mean && s->mean >= a->mean;
    const bool apart = p->mean - *p->half_width > a->mean + *a->half_width;
    ordered += order ? 1 : 0;
    disjoint += apart ? 1 : 0;
    detail += (detail.empty() ? "" : "; ") + t + " P " + cell(*p) + " S " + cell(*s) + " A " + cell(*a) +
              (order ? " ordered" : " unordered") + (apart ? ", disjoint" : "");
  }
  const bool pass = ordered >= kOrderingTargetsNeeded && disjoint >= kDisjointTargetsNeeded && out.failures.empty();
  return {pass, "ordering on " + std::to_string(ordered) + "/4 (need " + std::to_string(kOrderingTargetsNeeded) +
                    "), disjoint on " + std::to_string(disjoint) + "/4 (need " +
                    std::to_string(kDisjointTargetsNeeded) + "): " + detail};
}

Verdict scaling_verdict(const ExperimentOutcome& out, const std::vector<std::string>& targets) {
  Verdict v{out.failures.empty(), ""};
  for (const char* method : {"ActDiff", "RRR"}) {
    int won = 0;
    std::string cells;
    for (const std::string& t : targets) {
      const ReportRow* erm = find_row(out.report, t, "ERM", "none");
      const ReportRow* r = find_row(out.report, t, method, "periphery");
      if (!erm || !r) return {false, std::string("missing rows for ") + method + " on " + t};
      won += r->mean >= erm->mean ? 1 : 0;
      cells += " " + t + " " + format_fixed(r->mean - erm->mean, 2);
    }
    v.pass = v.pass && won >= kScalingTargetsNeeded;
    v.detail += (v.detail.empty() ? "" : "; ") + std::string(method) + "-periphery >= ERM on " + std::to_string(won) +
                "/4 (need " + std::to_string(kScalingTargetsNeeded) + "), gaps" + cells;
  }
  return v;
}

Verdict determinism_verdict(const BenchmarkData& data, const ExperimentOutcome& baseline,
                            const ExperimentOutcome& masks, std::uint64_t seed) {
  const MaskContext ctx{periphery_mask(data.train.spec), std::nullopt};
  std::string detail;
  bool pass = true;
  const std::vector<std::tuple<const ExperimentOutcome*, std::string, std::string, std::string>> cells{
      {&baseline, "ERM-none", "ERM", "none"}, {&masks, "ActDiff-periphery", "ActDiff", "periphery"}};
  for (const auto& [outcome, key, method, mask] : cells) {
    auto it = outcome->selected.find(key);
    if (it == outcome->selected.end()) return {false, "no selected configuration for " + key};
    TrainConfig config = it->second;
    config.seed = seed;
    const CellResult rerun = run_cell(config, data, ctx);
    int compared = 0, equal = 0;
    for (const auto& [dataset, value] : rerun.aurocs) {
      for (const ResultRecord& r : outcome->records) {
        if (r.dataset == dataset && r.method == method && r.mask_kind == mask && r.seed == static_cast<int>(seed)) {
          ++compared;
          equal += r.auroc == value ? 1 : 0;
        }
      }
    }
    const bool ok = compared == static_cast<int>(rerun.aurocs.size()) && equal == compared;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + key + " seed " + std::to_string(seed) + ": " + std::to_string(equal) +
              "/" + std::to_string(rerun.aurocs.size()) + " AUROCs identical";
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = MASKDG_ACCEPTANCE_DIR;
  int workers = 1;
  app.add_option("--work", work, "Work directory for benchmarks and cached runs")->capture_default_str();
  app.add_option("--workers", workers, "Parallel training runs")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  const fs::path dir = work;
  fs::create_directories(dir / "logs");

  int failures = 0;
  auto report = [&](int id, const std::string& title, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    print_verdict(id, title, v);
  };

  report(1, "loss correctness", [&] { return run_suite("loss-correctness", dir / "logs" / "loss-correctness.txt"); });
  report(2, "masking", [&] { return run_suite("masking", dir / "logs" / "masking.txt"); });
  report(3, "AUROC oracle equivalence", [&] { return run_suite("auroc-oracle", dir / "logs" / "auroc-oracle.txt"); });
  report(4, "paper-arithmetic fixtures",
         [&] { return run_suite("paper-fixtures", dir / "logs" / "paper-fixtures.txt"); });

  std::optional<BenchmarkData> bench;
  std::optional<ExperimentOutcome> baseline, masks;
  std::vector<std::string> targets;
  report(5, "baseline, abnormality masks vs ERM", [&] {
    bench = load_or_generate(dir / "bench", kSourceTrainVal);
    for (const Dataset& t : bench->targets) targets.push_back(t.name);
    baseline = run_suite_experiment(ExperimentPlan::defaults(SuiteKind::Baseline), *bench, dir, "baseline", workers);
    return baseline_verdict(*baseline);
  });
  report(6, "mask comparison ordering", [&] {
    if (!bench) throw Error(ErrorKind::DegenerateDataset, "benchmark unavailable");
    masks = run_suite_experiment(ExperimentPlan::defaults(SuiteKind::MaskComparison), *bench, dir, "mask-comparison",
                                 workers);
    return mask_comparison_verdict(*masks, targets);
  });
  report(7, "scaling, periphery masks vs ERM", [&] {
    if (!baseline || !masks) throw Error(ErrorKind::DegenerateDataset, "selected configurations unavailable");
    const BenchmarkData large = load_or_generate(dir / "bench-large", kScaledTrainVal);
    ExperimentPlan plan = ExperimentPlan::defaults(SuiteKind::Scaling);
    plan.grid = GridMode::Fixed;
    for (const auto* outcome : {&*baseline, &*masks}) {
      for (const auto& [key, config] : outcome->selected) plan.fixed.insert_or_assign(key, config);
    }
    const ExperimentOutcome out = run_suite_experiment(plan, large, dir, "scaling", workers);
    std::vector<std::string> large_targets;
    for (const Dataset& t : large.targets) large_targets.push_back(t.name);
    return scaling_verdict(out, large_targets);
  });
  report(8, "gaze pipeline end to end",
         [&] { return run_suite("gaze-end-to-end", dir / "logs" / "gaze-end-to-end.txt"); });
  report(9, "determinism of experiment cells", [&] {
    if (!bench || !baseline || !masks) throw Error(ErrorKind::DegenerateDataset, "experiments unavailable");
    return determinism_verdict(*bench, *baseline, *masks, 1);
  });

  std::printf("%d of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
