// maskdg: dataset generation, gaze masks, training, evaluation and the
// experiment suites from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "maskdg/dataset_io.hpp"
#include "maskdg/eval.hpp"
#include "maskdg/experiment.hpp"
#include "maskdg/gaze.hpp"
#include "maskdg/seeding.hpp"
#include "maskdg/synthbench.hpp"
#include "maskdg/text_format.hpp"
#include "maskdg/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace maskdg;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out = ".";
  int workers = 1;
};

struct SpecOptions {
  DomainSpec spec;
  double shifted_population = 0.5;

  void add(CLI::App* app) {
    app->add_option("--class-balance", spec.class_balance, "Positive fraction")->capture_default_str();
    app->add_option("--abn-amplitude", spec.abn_amplitude, "Abnormality blob amplitude")->capture_default_str();
    app->add_option("--bg-amplitude", spec.bg_amplitude, "Annulus signal amplitude")->capture_default_str();
    app->add_option("--sp-amplitude", spec.sp_amplitude, "Spurious token amplitude")->capture_default_str();
    app->add_option("--noise-std", spec.noise_std, "Pixel noise inside the annulus")->capture_default_str();
    app->add_option("--outside-noise-std", spec.outside_noise_std, "Pixel noise elsewhere")->capture_default_str();
    app->add_option("--shifted-population", shifted_population, "Population parameter of the age-shifted targets")
        ->capture_default_str();
  }
};

TrainConfig read_config_file(const std::string& path) {
  return TrainConfig::from_fields(parse_key_values(read_text_file(path), path));
}

void print_table(const std::vector<std::pair<std::string, double>>& rows) {
  for (const auto& [name, value] : rows) std::printf("%-16s %.4f\n", name.c_str(), value);
}

// gen ----------------------------------------------------------------------

struct GenOptions {
  std::string suite = "default";
  int n = 1170;
  int n_test = 1000;
  double val_fraction = kDefaultValFraction;
  int gaze_sequences = 40;
  int fixations = 30;
  SpecOptions spec;
};

int cmd_gen(const GlobalOptions& g, const GenOptions& o) {
  if (o.suite != "default") throw UsageError("unknown suite '" + o.suite + "'");
  if (o.n < 2) throw UsageError("--n must be at least 2");
  if (o.n_test < 1) throw UsageError("--n-test must be at least 1");
  DomainSpec spec = o.spec.spec;
  spec.seed = g.seed;
  spec.validate();
  const fs::path out = g.out;
  const BenchmarkData data = generate_benchmark(spec, o.n, o.n_test, o.val_fraction, o.spec.shifted_population);
  save_benchmark(data, out);
  const auto gaze = simulate_gaze(spec, o.gaze_sequences, o.fixations, derive_seed(g.seed, {0x9a2e}));
  std::ostringstream csv;
  write_gaze_records(csv, gaze);
  write_text_file((out / "gaze.csv").string(), csv.str());
  for (const Dataset* d : {&data.train, &data.val, &data.test}) {
    std::printf("%s\n", (out / "source" / d->split / kManifestName).string().c_str());
  }
  for (const Dataset& t : data.targets) std::printf("%s\n", (out / "targets" / t.name / kManifestName).string().c_str());
  return 0;
}

// gaze ---------------------------------------------------------------------

struct GazeOptions {
  std::string input;
  std::string output = "gaze_mask.f32";
  double sigma = 2.0;
  double keep = 0.8;
  int height = 64;
  int width = 64;
};

int cmd_gaze(const GazeOptions& o) {
  const auto sequences = read_gaze_file(o.input);
  const GazeAggregate agg = aggregate_gaze(sequences, o.height, o.width, o.sigma);
  const SegMask mask = threshold_heatmap(agg.heatmap, o.keep);
  write_raster(o.output, mask.values().cast<float>());
  std::printf("sequences %d, mask pixels %lld, kept mass %.4f\n", agg.n_sequences,
              static_cast<long long>(mask.popcount()), mass_fraction(agg.heatmap, mask));
  return 0;
}

std::optional<SegMask> load_mask(const std::string& path) {
  if (path.empty()) return std::nullopt;
  const ImageRaster r = read_raster(path);
  MaskRaster m(r.rows(), r.cols());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r.data()[i] != 0.0f && r.data()[i] != 1.0f) throw Error(ErrorKind::InvalidMask, path + ": non-binary value");
    m.data()[i] = static_cast<std::uint8_t>(r.data()[i]);
  }
  return SegMask(std::move(m));
}

// train / eval -------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string config;
  std::string method = "ERM";
  std::string mask = "abnormality";
  std::optional<double> lr, wd, lambda;
  std::optional<int> epochs, batch_size, tap_layer, scale_block;
  std::string gaze_mask;
};

int cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  TrainConfig c = o.config.empty() ? TrainConfig::defaults_for(parse_method(o.method)) : read_config_file(o.config);
  if (o.config.empty()) c.mask_kind = c.method == Method::ERM ? MaskKind::FullOnes : parse_mask_kind(o.mask);
  c.seed = g.seed;
  if (o.lr) c.learning_rate = *o.lr;
  if (o.wd) c.weight_decay = *o.wd;
  if (o.lambda) (c.method == Method::RRR ? c.lambda_rrr : c.lambda_act) = *o.lambda;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.tap_layer) c.tap_layer = *o.tap_layer;
  if (o.scale_block) c.scale_block = *o.scale_block;
  c.validate();

  const BenchmarkData data = load_benchmark(o.data);
  const MaskContext masks{periphery_mask(data.train.spec), load_mask(o.gaze_mask), c.scale_block};
  const fs::path out = g.out;
  fs::create_directories(out);
  std::string log = format_log_header();
  const TrainResult r = train(c, data.train.samples, data.val.samples, masks, [&](const EpochRecord& rec) {
    log += format_log_record(rec);
    std::printf("epoch %3d  loss %.4f  penalty %.4f  val %.4f\n", rec.epoch, rec.train_loss, rec.penalty, rec.val_auroc);
    std::fflush(stdout);
  });
  write_text_file((out / "train_log.tsv").string(), log);
  write_text_file((out / "config.txt").string(), render_key_values(r.config.to_fields()));
  save_model((out / "model.txt").string(), *r.model, r.config);
  std::printf("best epoch %d, validation AUROC %.4f\nmodel written to %s\n", r.best_epoch, r.best_val_auroc,
              (out / "model.txt").string().c_str());
  return 0;
}

struct EvalOptions {
  std::string model;
  std::string data;
  std::string dataset;
};

int cmd_eval(const EvalOptions& o) {
  if (o.data.empty() == o.dataset.empty()) throw UsageError("give exactly one of --data or --dataset");
  const auto model = load_model(o.model);
  std::vector<std::pair<std::string, double>> rows;
  if (!o.dataset.empty()) {
    const Dataset d = load_dataset(o.dataset);
    rows.emplace_back(d.name + "/" + d.split, evaluate_auroc(*model, d.samples));
  } else {
    const BenchmarkData data = load_benchmark(o.data);
    rows.emplace_back(data.test.name, evaluate_auroc(*model, data.test.samples));
    for (const Dataset& t : data.targets) rows.emplace_back(t.name, evaluate_auroc(*model, t.samples));
  }
  print_table(rows);
  return 0;
}

// experiment / report ------------------------------------------------------

struct ExperimentOptions {
  std::string suite;
  std::string data;
  int seeds = 0;
  bool full_grid = false;
  std::string fixed_from;
  std::optional<int> erm_epochs, epochs;
  std::string gaze_mask;
  std::string cache;
  bool plot = false;
};

int cmd_experiment(const GlobalOptions& g, const ExperimentOptions& o) {
  ExperimentPlan plan = ExperimentPlan::defaults(parse_suite(o.suite));
  const std::size_t n_seeds = o.seeds > 0 ? static_cast<std::size_t>(o.seeds) : plan.seeds.size();
  plan.seeds.clear();
  for (std::size_t s = 0; s < n_seeds; ++s) plan.seeds.push_back(g.seed + s);
  if (o.full_grid && !o.fixed_from.empty()) throw UsageError("--full-grid and --fixed-from are exclusive");
  if (o.full_grid) plan.grid = GridMode::Full;
  if (!o.fixed_from.empty()) {
    plan.grid = GridMode::Fixed;
    for (const std::string& dir : split(o.fixed_from, ',')) {
      for (auto& [key, config] : load_selected_configs(dir)) plan.fixed.insert_or_assign(key, config);
    }
  }
  if (o.erm_epochs) plan.erm_epochs = *o.erm_epochs;
  if (o.epochs) plan.regularized_epochs = *o.epochs;
  plan.gaze = load_mask(o.gaze_mask);
  plan.workers = g.workers;
  plan.cache_dir = o.cache;
  plan.validate();

  const BenchmarkData data = load_benchmark(o.data);
  const fs::path out = g.out;
  const ExperimentOutcome outcome = run_experiment(plan, data, out, [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  });
  if (!outcome.records.empty()) {
    std::printf("\n%s\n%s", render_report(outcome.report).c_str(), format_comparisons(outcome.comparisons).c_str());
    if (o.plot) write_text_file((out / "report.svg").string(), render_report_svg(outcome.report));
  }
  for (const std::string& f : outcome.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return outcome.failures.empty() ? 0 : 2;
}

struct ReportOptions {
  std::string results;
  std::string source = "source";
  std::string baseline;
  bool plot = false;
};

int cmd_report(const GlobalOptions& g, const ReportOptions& o) {
  const auto records = parse_results(read_text_file(o.results));
  if (records.empty()) throw Error(ErrorKind::DegenerateDataset, o.results + ": no results");
  std::vector<std::string> order{o.source}, targets;
  for (const ResultRecord& r : records) {
    if (std::find(order.begin(), order.end(), r.dataset) == order.end()) {
      order.push_back(r.dataset);
      targets.push_back(r.dataset);
    }
  }
  EvalReport report = build_report(records, order, targets);
  if (!o.baseline.empty()) {
    const auto parts = split(o.baseline, '/');
    if (parts.size() != 2) throw UsageError("--baseline expects METHOD/MASK");
    attach_gains(report, parts[0], parts[1]);
  }
  std::printf("%s", render_report(report).c_str());
  if (o.plot) {
    fs::create_directories(g.out);
    write_text_file((fs::path(g.out) / "report.svg").string(), render_report_svg(report));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-guided domain generalization on a synthetic radiograph benchmark"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--workers", g.workers, "Parallel training runs")->capture_default_str()->check(CLI::PositiveNumber);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate the source splits, four targets and simulated gaze");
  gen_cmd->add_option("--suite", gen.suite, "Suite name")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Source train+val samples")->capture_default_str();
  gen_cmd->add_option("--n-test", gen.n_test, "Test samples per domain")->capture_default_str();
  gen_cmd->add_option("--val-fraction", gen.val_fraction, "Validation share of --n")->capture_default_str();
  gen_cmd->add_option("--gaze-sequences", gen.gaze_sequences, "Simulated gaze sequences")->capture_default_str();
  gen_cmd->add_option("--fixations", gen.fixations, "Fixations per sequence")->capture_default_str();
  gen.spec.add(gen_cmd);

  GazeOptions gz;
  auto* gaze_cmd = app.add_subcommand("gaze", "Turn gaze records into a mask");
  gaze_cmd->add_option("--input", gz.input, "Gaze CSV (image_id,row,col,duration)")->required();
  gaze_cmd->add_option("--output", gz.output, "Mask raster to write")->capture_default_str();
  gaze_cmd->add_option("--sigma", gz.sigma, "Gaussian spread in pixels")->capture_default_str();
  gaze_cmd->add_option("--keep", gz.keep, "Mass fraction kept by the threshold")->capture_default_str();
  gaze_cmd->add_option("--height", gz.height, "Raster height")->capture_default_str();
  gaze_cmd->add_option("--width", gz.width, "Raster width")->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--data", tr.data, "Benchmark directory written by gen")->required();
  train_cmd->add_option("--config", tr.config, "Config file (key = value)");
  train_cmd->add_option("--method", tr.method, "ERM, ActDiff or RRR")->capture_default_str();
  train_cmd->add_option("--mask", tr.mask, "abnormality, scaled, periphery, gaze or full")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate");
  train_cmd->add_option("--wd", tr.wd, "Weight decay");
  train_cmd->add_option("--lambda", tr.lambda, "Penalty weight of the chosen method");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "Minibatch size");
  train_cmd->add_option("--tap-layer", tr.tap_layer, "ActDiff tap (1-based conv block, 0 = last)");
  train_cmd->add_option("--scale-block", tr.scale_block, "Tile size of scaled abnormality masks");
  train_cmd->add_option("--gaze-mask", tr.gaze_mask, "Mask raster for the gaze condition");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model");
  eval_cmd->add_option("--model", ev.model, "Model file written by train")->required();
  eval_cmd->add_option("--data", ev.data, "Benchmark directory (source test + targets)");
  eval_cmd->add_option("--dataset", ev.dataset, "A single dataset manifest");

  ExperimentOptions ex;
  auto* exp_cmd = app.add_subcommand("experiment", "Run an experiment suite");
  exp_cmd->add_option("suite", ex.suite, "baseline, mask-comparison or scaling")
      ->required()
      ->check(CLI::IsMember({"baseline", "mask-comparison", "scaling"}));
  exp_cmd->add_option("--data", ex.data, "Benchmark directory written by gen")->required();
  exp_cmd->add_option("--seeds", ex.seeds, "Number of seeds, counting up from --seed (default 10, scaling 3)");
  exp_cmd->add_flag("--full-grid", ex.full_grid, "Search the full hyperparameter grid");
  exp_cmd->add_option("--fixed-from", ex.fixed_from, "Reuse configurations selected by earlier runs (comma-separated dirs)");
  exp_cmd->add_option("--erm-epochs", ex.erm_epochs, "ERM epochs");
  exp_cmd->add_option("--epochs", ex.epochs, "ActDiff/RRR epochs");
  exp_cmd->add_option("--gaze-mask", ex.gaze_mask, "Mask raster for gaze conditions");
  exp_cmd->add_option("--cache", ex.cache, "Directory of cached runs shared between suites (default <out>/runs)");
  exp_cmd->add_flag("--plot", ex.plot, "Also write report.svg");

  ReportOptions rp;
  auto* report_cmd = app.add_subcommand("report", "Render a results file");
  report_cmd->add_option("--results", rp.results, "results.tsv")->required();
  report_cmd->add_option("--source", rp.source, "Name of the source dataset")->capture_default_str();
  report_cmd->add_option("--baseline", rp.baseline, "METHOD/MASK row used for the gain column");
  report_cmd->add_flag("--plot", rp.plot, "Also write report.svg under --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (*gen_cmd) return cmd_gen(g, gen);
    if (*gaze_cmd) return cmd_gaze(gz);
    if (*train_cmd) return cmd_train(g, tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*exp_cmd) return cmd_experiment(g, ex);
    if (*report_cmd) return cmd_report(g, rp);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
