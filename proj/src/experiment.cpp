#include "maskdg/experiment.hpp"

#include "maskdg/masks.hpp"
#include "maskdg/synthbench.hpp"
#include "maskdg/text_format.hpp"
#include "maskdg/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

namespace maskdg {

namespace fs = std::filesystem;

std::string_view to_string(SuiteKind suite) {
  switch (suite) {
    case SuiteKind::Baseline: return "baseline";
    case SuiteKind::MaskComparison: return "mask-comparison";
    case SuiteKind::Scaling: return "scaling";
  }
  return "?";
}

SuiteKind parse_suite(std::string_view text) {
  for (SuiteKind s : {SuiteKind::Baseline, SuiteKind::MaskComparison, SuiteKind::Scaling}) {
    if (text == to_string(s)) return s;
  }
  throw Error(ErrorKind::Parameter, "unknown experiment suite '" + std::string(text) + "'");
}

std::string Condition::mask_label() const {
  return method == Method::ERM ? "none" : std::string(storage_name(mask));
}

std::string Condition::key() const { return std::string(to_string(method)) + "-" + mask_label(); }

ExperimentPlan ExperimentPlan::defaults(SuiteKind suite) {
  ExperimentPlan p;
  p.suite = suite;
  const int n_seeds = suite == SuiteKind::Scaling ? 3 : 10;
  for (int s = 0; s < n_seeds; ++s) p.seeds.push_back(static_cast<std::uint64_t>(s));
  const Condition erm{Method::ERM, MaskKind::FullOnes};
  switch (suite) {
    case SuiteKind::Baseline:
      p.conditions = {erm, {Method::ActDiff, MaskKind::Abnormality}, {Method::RRR, MaskKind::Abnormality}};
      break;
    case SuiteKind::MaskComparison:
      p.conditions = {{Method::ActDiff, MaskKind::Abnormality},
                      {Method::ActDiff, MaskKind::ScaledAbnormality},
                      {Method::ActDiff, MaskKind::Periphery},
                      {Method::RRR, MaskKind::Abnormality},
                      {Method::RRR, MaskKind::Periphery}};
      break;
    case SuiteKind::Scaling:
      p.conditions = {erm,
                      {Method::ActDiff, MaskKind::Abnormality},
                      {Method::ActDiff, MaskKind::Periphery},
                      {Method::RRR, MaskKind::Abnormality},
                      {Method::RRR, MaskKind::Periphery}};
      break;
  }
  return p;
}

void ExperimentPlan::validate() const {
  if (conditions.empty()) throw Error(ErrorKind::Parameter, "experiment plan has no conditions");
  if (seeds.empty()) throw Error(ErrorKind::Parameter, "experiment plan has no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw Error(ErrorKind::Parameter, "experiment seeds must be distinct");
  }
  std::set<std::string> keys;
  for (const Condition& c : conditions) {
    if (!keys.insert(c.key()).second) throw Error(ErrorKind::Parameter, "duplicate condition " + c.key());
    if (c.method != Method::ERM && c.mask == MaskKind::GazeDerived && !gaze) {
      throw Error(ErrorKind::Parameter, "condition " + c.key() + " needs a gaze mask");
    }
  }
  if (workers < 1) throw Error(ErrorKind::Parameter, "workers must be >= 1");
  if (erm_epochs < 1 || regularized_epochs < 1) throw Error(ErrorKind::Parameter, "epochs must be >= 1");
}

BenchmarkData generate_benchmark(const DomainSpec& base, int n_train_val, int n_test, double val_fraction,
                                 double shifted_population) {
  if (n_train_val < 2 || n_test < 1) throw Error(ErrorKind::Parameter, "benchmark needs n >= 2 and n_test >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error(ErrorKind::Parameter, "val_fraction must lie in (0,1)");
  const int n_val = std::clamp(static_cast<int>(std::lround(n_train_val * val_fraction)), 1, n_train_val - 1);
  const int n_train = n_train_val - n_val;
  const BenchmarkSuite suite = make_suite(base, shifted_population);

  auto source = generate_domain(suite.source.spec, n_train_val + n_test, suite.source.name);
  BenchmarkData data;
  auto slice = [&](const std::string& split, int begin, int end) {
    return Dataset{suite.source.name, split, suite.source.spec,
                   std::vector<LabeledSample>(source.begin() + begin, source.begin() + end)};
  };
  data.train = slice("train", 0, n_train);
  data.val = slice("val", n_train, n_train_val);
  data.test = slice("test", n_train_val, n_train_val + n_test);
  for (const NamedDomain& t : suite.targets) {
    data.targets.push_back({t.name, "test", t.spec, generate_domain(t.spec, n_test, t.name)});
  }
  return data;
}

void save_benchmark(const BenchmarkData& data, const fs::path& dir) {
  save_dataset(data.train, dir / "source" / "train");
  save_dataset(data.val, dir / "source" / "val");
  save_dataset(data.test, dir / "source" / "test");
  std::string order;
  for (const Dataset& t : data.targets) {
    save_dataset(t, dir / "targets" / t.name);
    order += t.name + "\n";
  }
  write_text_file((dir / "targets" / "order.txt").string(), order);
}

BenchmarkData load_benchmark(const fs::path& dir) {
  BenchmarkData data;
  data.train = load_dataset(dir / "source" / "train");
  data.val = load_dataset(dir / "source" / "val");
  data.test = load_dataset(dir / "source" / "test");
  const fs::path order = dir / "targets" / "order.txt";
  if (!fs::is_regular_file(order)) throw Error(ErrorKind::ManifestNotFound, order.string());
  for (const std::string& raw : split(read_text_file(order.string()), '\n')) {
    const std::string name(trim(raw));
    if (!name.empty()) data.targets.push_back(load_dataset(dir / "targets" / name));
  }
  return data;
}

namespace {

using Clock = std::chrono::steady_clock;

struct RunOutcome : CellResult {
  bool cached = false;
  double seconds = 0.0;
};

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fingerprint(const BenchmarkData& data) {
  std::string out;
  auto add = [&](const Dataset& d) {
    out += d.name + "/" + d.split + ":" + format_int(static_cast<long long>(d.samples.size())) + ":" +
           hex(fnv1a(render_key_values(d.spec.to_fields()))) + ";";
  };
  add(data.train);
  add(data.val);
  add(data.test);
  for (const Dataset& t : data.targets) add(t);
  return out;
}

std::string run_identity(const TrainConfig& config, const std::string& data_fp) {
  return render_key_values(config.to_fields()) + "data = " + data_fp + "\n";
}

std::optional<RunOutcome> read_cached(const fs::path& path, const std::string& identity) {
  if (!fs::is_regular_file(path)) return std::nullopt;
  const std::string text = read_text_file(path.string());
  const auto sep = text.find("---\n");
  if (sep == std::string::npos || text.substr(0, sep) != identity) return std::nullopt;
  RunOutcome r;
  r.cached = true;
  for (const std::string& line : split(text.substr(sep + 4), '\n')) {
    const auto f = split(line, '\t');
    if (f.size() != 2) continue;
    if (f[0] == "val_auroc") r.val_auroc = parse_real(f[1], "val_auroc");
    else if (f[0] == "best_epoch") r.best_epoch = static_cast<int>(parse_int(f[1], "best_epoch"));
    else r.aurocs.emplace_back(f[0], parse_real(f[1], f[0]));
  }
  return r;
}

RunOutcome run_cached(const TrainConfig& config, const BenchmarkData& data, const MaskContext& masks,
                      const fs::path& dir, const std::string& data_fp) {
  const std::string identity = run_identity(config, data_fp);
  const fs::path path = dir / (hex(fnv1a(identity)) + ".txt");
  if (auto cached = read_cached(path, identity)) return *cached;

  const auto start = Clock::now();
  RunOutcome r;
  static_cast<CellResult&>(r) = run_cell(config, data, masks);
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();

  std::string body = identity + "---\n";
  body += "val_auroc\t" + format_real(r.val_auroc) + "\n";
  body += "best_epoch\t" + format_int(r.best_epoch) + "\n";
  for (const auto& [name, value] : r.aurocs) body += name + "\t" + format_real(value) + "\n";
  fs::create_directories(dir);
  write_text_file(path.string(), body);
  return r;
}

// Runs fn(0..n-1) on `workers` threads. fn must not throw.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  const int count = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(workers)));
  for (int w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

TrainConfig base_config(const ExperimentPlan& plan, const Condition& c) {
  TrainConfig config = TrainConfig::defaults_for(c.method);
  config.mask_kind = c.method == Method::ERM ? MaskKind::FullOnes : c.mask;
  config.epochs = c.method == Method::ERM ? plan.erm_epochs : plan.regularized_epochs;
  config.seed = plan.seeds.front();
  return config;
}

std::string describe(const TrainConfig& c) {
  std::string out = "lr=" + format_real(c.learning_rate) + " wd=" + format_real(c.weight_decay);
  if (c.method != Method::ERM) out += " lambda=" + format_real(c.lambda());
  return out + " seed=" + format_int(static_cast<long long>(c.seed));
}

void add_comparison(ExperimentOutcome& out, const EvalReport& report, const Condition& a, const Condition& b) {
  const auto rows_a = select_rows(report, std::string(to_string(a.method)), a.mask_label());
  const auto rows_b = select_rows(report, std::string(to_string(b.method)), b.mask_label());
  if (rows_a.empty() || rows_b.empty()) return;
  out.comparisons.push_back({a.key() + " vs " + b.key(), compare_conditions(rows_a, rows_b)});
}

}  // namespace

CellResult run_cell(const TrainConfig& config, const BenchmarkData& data, const MaskContext& masks) {
  const TrainResult trained = train(config, data.train.samples, data.val.samples, masks);
  CellResult r;
  r.val_auroc = trained.best_val_auroc;
  r.best_epoch = trained.best_epoch;
  r.aurocs.emplace_back(data.test.name, evaluate_auroc(*trained.model, data.test.samples));
  for (const Dataset& t : data.targets) r.aurocs.emplace_back(t.name, evaluate_auroc(*trained.model, t.samples));
  return r;
}

ExperimentOutcome run_experiment(const ExperimentPlan& plan, const BenchmarkData& data, const fs::path& out_dir,
                                 const ProgressFn& progress) {
  plan.validate();
  if (data.train.samples.empty() || data.val.samples.empty() || data.test.samples.empty()) {
    throw Error(ErrorKind::DegenerateDataset, "benchmark splits must be nonempty");
  }
  fs::create_directories(out_dir);
  const std::string data_fp = fingerprint(data);
  MaskContext masks{periphery_mask(data.train.spec), plan.gaze, kDefaultScaleBlock};
  const fs::path cache = plan.cache_dir.empty() ? out_dir / "runs" : plan.cache_dir;

  std::mutex log_mutex;
  auto log = [&](const std::string& message) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(message);
  };

  ExperimentOutcome out;

  // Hyperparameter selection on the first seed.
  struct GridTask {
    std::size_t condition;
    TrainConfig config;
  };
  std::vector<GridTask> grid_tasks;
  std::vector<std::vector<GridCell>> grid_cells(plan.conditions.size());
  for (std::size_t i = 0; i < plan.conditions.size(); ++i) {
    const Condition& c = plan.conditions[i];
    const TrainConfig base = base_config(plan, c);
    if (plan.grid == GridMode::Fixed) {
      TrainConfig fixed = base;
      if (auto it = plan.fixed.find(c.key()); it != plan.fixed.end()) {
        fixed = it->second;
        fixed.epochs = base.epochs;
        fixed.seed = base.seed;
        fixed.mask_kind = base.mask_kind;
      }
      fixed.validate();
      out.selected[c.key()] = fixed;
      continue;
    }
    const HyperGrid grid = plan.grid == GridMode::Full ? HyperGrid::full(c.method) : HyperGrid::desk(c.method);
    for (const TrainConfig& cfg : grid_configs(base, grid)) {
      grid_tasks.push_back({i, cfg});
      grid_cells[i].push_back({cfg, std::nullopt, {}});
    }
  }
  std::vector<std::optional<double>> grid_values(grid_tasks.size());
  std::vector<std::string> grid_errors(grid_tasks.size());
  parallel_for(grid_tasks.size(), plan.workers, [&](std::size_t t) {
    const GridTask& task = grid_tasks[t];
    const std::string key = plan.conditions[task.condition].key();
    try {
      const RunOutcome r = run_cached(task.config, data, masks, cache / key, data_fp);
      grid_values[t] = r.val_auroc;
      log("[grid] " + key + " " + describe(task.config) + ": val " + format_fixed(r.val_auroc, 4) +
          (r.cached ? " (cached)" : " (" + format_fixed(r.seconds, 1) + "s)"));
    } catch (const std::exception& e) {
      grid_errors[t] = e.what();
      log("[grid] " + key + " " + describe(task.config) + ": FAILED " + e.what());
    }
  });
  {
    std::vector<std::size_t> offset(plan.conditions.size(), 0);
    for (std::size_t t = 0; t < grid_tasks.size(); ++t) {
      GridCell& cell = grid_cells[grid_tasks[t].condition][offset[grid_tasks[t].condition]++];
      cell.val_auroc = grid_values[t];
      cell.error = grid_errors[t];
    }
  }
  for (std::size_t i = 0; i < plan.conditions.size(); ++i) {
    if (plan.grid == GridMode::Fixed) continue;
    const std::string key = plan.conditions[i].key();
    GridResult result{grid_cells[i], 0};
    for (const GridCell& cell : result.cells) {
      if (!cell.val_auroc) out.failures.push_back(key + " grid cell " + describe(cell.config) + ": " + cell.error);
    }
    try {
      result.best_index = select_best(result.cells);
    } catch (const Error& e) {
      out.failures.push_back(key + ": " + e.what());
      continue;
    }
    fs::create_directories(out_dir / "grid");
    write_text_file((out_dir / "grid" / (key + ".tsv")).string(), format_grid_table(result));
    out.selected[key] = result.best();
  }
  fs::create_directories(out_dir / "selected");
  for (const auto& [key, config] : out.selected) {
    write_text_file((out_dir / "selected" / (key + ".txt")).string(), render_key_values(config.to_fields()));
  }

  // Seed replication of the selected configurations.
  struct SeedTask {
    std::size_t condition;
    TrainConfig config;
  };
  std::vector<SeedTask> seed_tasks;
  for (std::size_t i = 0; i < plan.conditions.size(); ++i) {
    const auto it = out.selected.find(plan.conditions[i].key());
    if (it == out.selected.end()) continue;
    for (std::uint64_t seed : plan.seeds) {
      TrainConfig c = it->second;
      c.seed = seed;
      seed_tasks.push_back({i, c});
    }
  }
  std::vector<std::optional<RunOutcome>> seed_results(seed_tasks.size());
  std::vector<std::string> seed_errors(seed_tasks.size());
  parallel_for(seed_tasks.size(), plan.workers, [&](std::size_t t) {
    const SeedTask& task = seed_tasks[t];
    const std::string key = plan.conditions[task.condition].key();
    try {
      seed_results[t] = run_cached(task.config, data, masks, cache / key, data_fp);
      std::string line = "[seed] " + key + " " + describe(task.config) + ":";
      for (const auto& [name, value] : seed_results[t]->aurocs) line += " " + format_fixed(value, 3);
      log(line + (seed_results[t]->cached ? " (cached)" : " (" + format_fixed(seed_results[t]->seconds, 1) + "s)"));
    } catch (const std::exception& e) {
      seed_errors[t] = e.what();
      log("[seed] " + key + " " + describe(task.config) + ": FAILED " + e.what());
    }
  });
  for (std::size_t t = 0; t < seed_tasks.size(); ++t) {
    const Condition& c = plan.conditions[seed_tasks[t].condition];
    if (!seed_results[t]) {
      out.failures.push_back(c.key() + " seed " + format_int(static_cast<long long>(seed_tasks[t].config.seed)) + ": " +
                             seed_errors[t]);
      continue;
    }
    for (const auto& [name, value] : seed_results[t]->aurocs) {
      out.records.push_back({name, std::string(to_string(c.method)), c.mask_label(),
                             static_cast<int>(seed_tasks[t].config.seed), value});
    }
  }

  std::vector<std::string> order{data.test.name}, targets;
  for (const Dataset& t : data.targets) {
    order.push_back(t.name);
    targets.push_back(t.name);
  }
  write_text_file((out_dir / "results.tsv").string(), format_results(out.records));
  if (!out.records.empty()) {
    out.report = build_report(out.records, order, targets);
    const Condition erm{Method::ERM, MaskKind::FullOnes};
    if (plan.suite == SuiteKind::MaskComparison) {
      for (Method m : {Method::ActDiff, Method::RRR}) {
        attach_gains(out.report, std::string(to_string(m)), "abnormality", std::string(to_string(m)));
      }
      add_comparison(out, out.report, {Method::ActDiff, MaskKind::Periphery}, {Method::ActDiff, MaskKind::Abnormality});
      add_comparison(out, out.report, {Method::ActDiff, MaskKind::ScaledAbnormality},
                     {Method::ActDiff, MaskKind::Abnormality});
      add_comparison(out, out.report, {Method::ActDiff, MaskKind::Periphery},
                     {Method::ActDiff, MaskKind::ScaledAbnormality});
      add_comparison(out, out.report, {Method::RRR, MaskKind::Periphery}, {Method::RRR, MaskKind::Abnormality});
    } else {
      attach_gains(out.report, "ERM", "none");
      for (const Condition& c : plan.conditions) {
        if (c.method != Method::ERM) add_comparison(out, out.report, c, erm);
      }
    }
    write_text_file((out_dir / "report.txt").string(), render_report(out.report));
    write_text_file((out_dir / "comparisons.txt").string(), format_comparisons(out.comparisons));
  }
  return out;
}

std::map<std::string, TrainConfig> load_selected_configs(const fs::path& out_dir) {
  std::map<std::string, TrainConfig> out;
  const fs::path dir = out_dir / "selected";
  if (!fs::is_directory(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    out[f.stem().string()] = TrainConfig::from_fields(parse_key_values(read_text_file(f.string()), f.string()));
  }
  return out;
}

std::string format_comparisons(const std::vector<NamedComparison>& comparisons) {
  std::string out;
  for (const NamedComparison& c : comparisons) {
    out += c.name + ": average target difference " + format_fixed(c.comparison.average_target_difference, 2) +
           ", targets won " + format_int(c.comparison.targets_won) + "\n";
    for (const DomainComparison& d : c.comparison.domains) {
      out += "  " + d.dataset + (d.target ? "*" : "") + "  " + (d.difference >= 0.0 ? "+" : "") +
             format_fixed(d.difference, 2) + (d.cis_disjoint ? "  (CIs disjoint)" : "") + "\n";
    }
  }
  return out;
}

}  // namespace maskdg
