#pragma once

// Experiment suites over a generated benchmark: hyperparameter selection on
// the source validation split, multi-seed replication, evaluation on the
// source test split and every target, aggregated reports and condition
// comparisons. Every training run is cached on disk keyed by its full
// configuration, so an interrupted suite resumes where it stopped.

#include "maskdg/dataset_io.hpp"
#include "maskdg/eval.hpp"
#include "maskdg/grid_search.hpp"
#include "maskdg/train_config.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maskdg {

enum class SuiteKind { Baseline, MaskComparison, Scaling };

std::string_view to_string(SuiteKind suite);
SuiteKind parse_suite(std::string_view text);

struct Condition {
  Method method = Method::ERM;
  MaskKind mask = MaskKind::FullOnes;  // unused by ERM

  // "none" for ERM, otherwise the mask's storage name.
  std::string mask_label() const;
  // "<method>-<mask label>", used for directory and map keys.
  std::string key() const;
};

enum class GridMode { Desk, Full, Fixed };

struct ExperimentPlan {
  SuiteKind suite = SuiteKind::Baseline;
  std::vector<Condition> conditions;
  std::vector<std::uint64_t> seeds;
  GridMode grid = GridMode::Desk;
  int erm_epochs = 15;
  int regularized_epochs = 20;
  // Configurations used with GridMode::Fixed, keyed by Condition::key();
  // missing conditions fall back to TrainConfig::defaults_for.
  std::map<std::string, TrainConfig> fixed;
  std::optional<SegMask> gaze;  // needed by GazeDerived conditions
  int workers = 1;
  // Where cached runs live; empty means <out_dir>/runs. Suites sharing a
  // benchmark may share one cache.
  std::filesystem::path cache_dir;

  // baseline:        ERM, ActDiff/abnormality, RRR/abnormality; 10 seeds
  // mask-comparison: ActDiff x {abnormality, scaled, periphery},
  //                  RRR x {abnormality, periphery}; 10 seeds
  // scaling:         ERM, ActDiff and RRR x {abnormality, periphery}; 3 seeds
  static ExperimentPlan defaults(SuiteKind suite);

  // Throws Parameter: no conditions or seeds, duplicate seeds or
  // conditions, workers < 1, gaze condition without a gaze mask.
  void validate() const;
};

// Source splits plus the target test sets, in suite order.
struct BenchmarkData {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<Dataset> targets;
};

inline constexpr double kDefaultValFraction = 0.145;

// Source: n_train_val samples split into train and val (val gets
// round(n_train_val * val_fraction)), followed by n_test test samples. Each
// target gets n_test samples.
BenchmarkData generate_benchmark(const DomainSpec& base, int n_train_val, int n_test,
                                 double val_fraction = kDefaultValFraction, double shifted_population = 0.5);

// Layout: <dir>/source/{train,val,test}/ and <dir>/targets/<name>/.
void save_benchmark(const BenchmarkData& data, const std::filesystem::path& dir);
BenchmarkData load_benchmark(const std::filesystem::path& dir);

// One trained and evaluated experiment cell.
struct CellResult {
  double val_auroc = 0.0;
  int best_epoch = 0;
  std::vector<std::pair<std::string, double>> aurocs;  // source test, then targets
};

// Trains `config` on the benchmark's source splits and evaluates it on the
// source test split and every target. No caching.
CellResult run_cell(const TrainConfig& config, const BenchmarkData& data, const MaskContext& masks);

struct NamedComparison {
  std::string name;  // "<A key> vs <B key>"
  ConditionComparison comparison;
};

struct ExperimentOutcome {
  std::vector<ResultRecord> records;
  EvalReport report;
  std::vector<NamedComparison> comparisons;
  std::map<std::string, TrainConfig> selected;  // by condition key
  std::vector<std::string> failures;            // one message per failed cell
};

using ProgressFn = std::function<void(const std::string&)>;

// Writes into out_dir:
//   runs/<condition>/<hash>.txt   one cached training run each (unless
//                                 plan.cache_dir is set)
//   grid/<condition>.tsv          grid table (grid modes only)
//   selected/<condition>.txt      chosen configuration
//   results.tsv, report.txt, comparisons.txt
ExperimentOutcome run_experiment(const ExperimentPlan& plan, const BenchmarkData& data,
                                 const std::filesystem::path& out_dir, const ProgressFn& progress = {});

// Reads selected/<condition>.txt files written by run_experiment.
std::map<std::string, TrainConfig> load_selected_configs(const std::filesystem::path& out_dir);

std::string format_comparisons(const std::vector<NamedComparison>& comparisons);

}  // namespace maskdg
