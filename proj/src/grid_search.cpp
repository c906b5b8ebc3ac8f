#include "maskdg/grid_search.hpp"

#include "maskdg/error.hpp"
#include "maskdg/text_format.hpp"

#include <algorithm>

namespace maskdg {

namespace {

void set_lambda(TrainConfig& c, double lambda) {
  switch (c.method) {
    case Method::ERM: break;
    case Method::ActDiff: c.lambda_act = lambda; break;
    case Method::RRR: c.lambda_rrr = lambda; break;
  }
}

}  // namespace

HyperGrid HyperGrid::full(Method) {
  return {{1e-5, 1e-4, 1e-3}, {0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}, {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0}};
}

HyperGrid HyperGrid::desk(Method method) {
  HyperGrid g{{1e-2, 3e-2}, {0.0, 1e-2}, {}};
  if (method == Method::ActDiff) g.lambdas = {0.1, 0.3};
  if (method == Method::RRR) g.lambdas = {1.0, 3.0};
  return g;
}

std::size_t HyperGrid::size(Method method) const {
  const std::size_t base = learning_rates.size() * weight_decays.size();
  return method == Method::ERM ? base : base * lambdas.size();
}

std::vector<TrainConfig> grid_configs(const TrainConfig& base, const HyperGrid& grid) {
  if (grid.learning_rates.empty() || grid.weight_decays.empty() ||
      (base.method != Method::ERM && grid.lambdas.empty())) {
    throw Error(ErrorKind::Parameter, "every grid axis needs at least one value");
  }
  auto sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto lrs = sorted(grid.learning_rates);
  const auto wds = sorted(grid.weight_decays);
  const auto lambdas = base.method == Method::ERM ? std::vector<double>{0.0} : sorted(grid.lambdas);
  std::vector<TrainConfig> out;
  for (double lr : lrs) {
    for (double wd : wds) {
      for (double lambda : lambdas) {
        TrainConfig c = base;
        c.learning_rate = lr;
        c.weight_decay = wd;
        set_lambda(c, lambda);
        c.validate();
        out.push_back(c);
      }
    }
  }
  return out;
}

std::size_t select_best(const std::vector<GridCell>& cells) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!cells[i].val_auroc) continue;
    if (!best || *cells[i].val_auroc > *cells[*best].val_auroc) best = i;
  }
  if (!best) throw Error(ErrorKind::NumericalFailure, "every grid cell failed");
  return *best;
}

GridResult grid_search(const TrainConfig& base, const HyperGrid& grid, const CellEvaluator& evaluate) {
  GridResult result;
  for (const TrainConfig& c : grid_configs(base, grid)) {
    GridCell cell{c, std::nullopt, {}};
    try {
      cell.val_auroc = evaluate(c);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    result.cells.push_back(std::move(cell));
  }
  result.best_index = select_best(result.cells);
  return result;
}

std::string format_grid_table(const GridResult& result) {
  std::string out = "learning_rate\tweight_decay\tlambda\tval_auroc\tselected\n";
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const GridCell& c = result.cells[i];
    out += format_real(c.config.learning_rate) + "\t" + format_real(c.config.weight_decay) + "\t" +
           format_real(c.config.lambda()) + "\t" +
           (c.val_auroc ? format_real(*c.val_auroc) : "failed: " + c.error) + "\t" +
           (i == result.best_index ? "yes" : "no") + "\n";
  }
  return out;
}

}  // namespace maskdg
