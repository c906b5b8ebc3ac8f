#pragma once

#include "maskdg/train_config.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace maskdg {

struct HyperGrid {
  std::vector<double> learning_rates;
  std::vector<double> weight_decays;
  std::vector<double> lambdas;  // ignored for ERM

  // LR {1e-5, 1e-4, 1e-3} x WD {0, 1e-4, 1e-3, 1e-2, 1e-1, 1} x
  // lambda {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1}.
  static HyperGrid full(Method method);
  // Two values per axis, sized for the small CNN trained from scratch.
  static HyperGrid desk(Method method);

  std::size_t size(Method method) const;
};

struct GridCell {
  TrainConfig config;
  std::optional<double> val_auroc;  // absent if training failed
  std::string error;
};

struct GridResult {
  std::vector<GridCell> cells;  // in enumeration order
  std::size_t best_index = 0;

  const TrainConfig& best() const { return cells.at(best_index).config; }
};

// Every (lr, wd, lambda) configuration derived from `base`, enumerated in
// ascending lexicographic order of (lr, wd, lambda).
std::vector<TrainConfig> grid_configs(const TrainConfig& base, const HyperGrid& grid);

// Picks the highest validation AUROC; ties go to the earliest cell, i.e. the
// smallest (lr, wd, lambda). Throws NumericalFailure if every cell failed.
std::size_t select_best(const std::vector<GridCell>& cells);

// Runs `evaluate` on every cell (returning its validation AUROC). Cells whose
// evaluation throws are recorded as failed and the search continues.
using CellEvaluator = std::function<double(const TrainConfig&)>;
GridResult grid_search(const TrainConfig& base, const HyperGrid& grid, const CellEvaluator& evaluate);

// Tab-delimited table "learning_rate\tweight_decay\tlambda\tval_auroc\tselected"
// with "failed: <message>" in place of the AUROC for failed cells.
std::string format_grid_table(const GridResult& result);

}  // namespace maskdg
