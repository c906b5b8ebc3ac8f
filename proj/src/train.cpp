#include "maskdg/train.hpp"

#include "maskdg/eval.hpp"
#include "maskdg/losses.hpp"
#include "maskdg/seeding.hpp"
#include "maskdg/text_format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace maskdg {

namespace {

using Mat = ad::Matrix<TrainScalar>;

enum SeedStream : std::uint64_t { kInit = 1, kOrder = 2, kShuffle = 3 };

std::string context(int epoch, int batch) {
  return "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch);
}

}  // namespace

std::unique_ptr<Model> make_model(const TrainConfig& config) {
  return std::make_unique<SmallCnn<TrainScalar>>(config.architecture, derive_seed(config.seed, {kInit}));
}

std::vector<double> predict_scores(const Model& model, std::span<const LabeledSample> samples, int batch_size) {
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const LabeledSample*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&samples[i]);
    const auto batch = make_batch<TrainScalar>(ptrs);
    ad::Tape<TrainScalar> tape;
    const auto params = model.bind(tape, false);
    const auto fp = model.forward(tape.constant(batch.images), params, batch.size(), batch.height, batch.width, 0);
    for (int j = 0; j < batch.size(); ++j) scores.push_back(std::exp(double(fp.log_probs.value()(1, j))));
  }
  return scores;
}

double evaluate_auroc(const Model& model, std::span<const LabeledSample> samples) {
  const auto scores = predict_scores(model, samples);
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return auroc(scores, labels);
}

TrainResult train(const TrainConfig& config, std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> val_set, const MaskContext& masks,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty() || val_set.empty()) throw Error(ErrorKind::Parameter, "train and validation sets must be nonempty");

  std::vector<SegMask> regions;
  if (config.method != Method::ERM) {
    MaskContext ctx = masks;
    ctx.scale_block = config.scale_block;
    regions.reserve(train_set.size());
    for (const auto& s : train_set) regions.push_back(condition_mask(config.mask_kind, s, ctx));
  }

  TrainResult result;
  result.config = config;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& s : train_set) {
    const auto v = s.image.values().cast<double>();
    sum += v.sum();
    sum_sq += v.squaredNorm();
  }
  const double count = double(train_set.size()) * train_set.front().image.values().size();
  result.config.architecture.input_mean = sum / count;
  result.config.architecture.input_std = std::sqrt(std::max(sum_sq / count - result.config.architecture.input_mean * result.config.architecture.input_mean, 1e-12));
  result.model = make_model(result.config);
  auto& params = result.model->parameters();
  std::vector<Mat> velocity;
  for (const Mat& p : params) velocity.push_back(Mat::Zero(p.rows(), p.cols()));
  std::vector<Mat> best = params;
  result.best_val_auroc = -1.0;

  const auto lr = static_cast<TrainScalar>(config.learning_rate);
  const auto decay = static_cast<TrainScalar>(config.learning_rate * config.weight_decay);
  const auto momentum = static_cast<TrainScalar>(config.momentum);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(config.seed, {kOrder, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, penalty_sum = 0.0;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const LabeledSample*> samples;
      std::vector<const SegMask*> region_ptrs;
      for (std::size_t i = start; i < end; ++i) {
        samples.push_back(&train_set[order[i]]);
        if (!regions.empty()) region_ptrs.push_back(&regions[order[i]]);
      }
      const auto batch = make_batch<TrainScalar>(samples, region_ptrs);

      ad::Tape<TrainScalar> tape;
      const auto vars = result.model->bind(tape, true);
      LossTerms<TrainScalar> terms;
      try {
        switch (config.method) {
          case Method::ERM:
            terms = erm_loss<TrainScalar>(*result.model, vars, batch);
            break;
          case Method::ActDiff:
            terms = actdiff_loss<TrainScalar>(
                *result.model, vars, batch, static_cast<TrainScalar>(config.lambda_act),
                derive_seed(config.seed, {kShuffle, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(n_batches)}),
                config.tap_layer);
            break;
          case Method::RRR:
            terms = rrr_loss<TrainScalar>(*result.model, vars, batch, static_cast<TrainScalar>(config.lambda_rrr));
            break;
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NumericalFailure) throw;
        throw Error(ErrorKind::NumericalFailure, "training diverged at " + context(epoch, n_batches) + ": " + e.what());
      }
      const double loss = terms.total.item();
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::NumericalFailure, "training diverged at " + context(epoch, n_batches) + ": loss " + format_real(loss));
      }
      const auto grads = tape.gradient(terms.total, vars);
      for (std::size_t k = 0; k < params.size(); ++k) {
        const Mat& g = grads[k].value();
        if (!g.allFinite()) {
          throw Error(ErrorKind::NumericalFailure, "non-finite gradient at " + context(epoch, n_batches));
        }
        velocity[k] = momentum * velocity[k] + g;
        params[k] -= lr * velocity[k] + decay * params[k];
      }
      loss_sum += loss;
      if (terms.penalty.valid()) penalty_sum += terms.penalty.item();
      ++n_batches;
    }
    EpochRecord rec{epoch, loss_sum / n_batches, penalty_sum / n_batches, evaluate_auroc(*result.model, val_set)};
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_auroc > result.best_val_auroc) {
      result.best_val_auroc = rec.val_auroc;
      result.best_epoch = epoch;
      best = params;
    }
  }
  result.final_model = result.model->clone();
  params = best;
  return result;
}

std::string format_log_header() { return "epoch\ttrain_loss\tpenalty\tval_auroc\n"; }

std::string format_log_record(const EpochRecord& r) {
  return format_int(r.epoch) + "\t" + format_real(r.train_loss) + "\t" + format_real(r.penalty) + "\t" +
         format_real(r.val_auroc) + "\n";
}

void save_model(const std::string& path, const Model& model, const TrainConfig& config) {
  std::string out = "maskdg-model v1\n";
  out += render_key_values(config.to_fields());
  for (const Mat& p : model.parameters()) {
    out += "param " + format_int(p.rows()) + " " + format_int(p.cols()) + "\n";
    for (Eigen::Index i = 0; i < p.size(); ++i) out += format_real(p.data()[i]) + (i + 1 < p.size() ? " " : "\n");
  }
  write_text_file(path, out);
}

std::unique_ptr<Model> load_model(const std::string& path, TrainConfig* config_out) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "maskdg-model v1") throw Error(ErrorKind::Parse, path + ": not a model file");
  std::string header;
  while (std::getline(in, line) && !line.starts_with("param ")) header += line + "\n";
  const TrainConfig config = TrainConfig::from_fields(parse_key_values(header, path));
  auto model = make_model(config);
  for (Mat& p : model->parameters()) {
    const auto f = split(line, ' ');
    if (f.size() != 3 || f[0] != "param" || parse_int(f[1], "rows") != p.rows() || parse_int(f[2], "cols") != p.cols()) {
      throw Error(ErrorKind::Parse, path + ": parameter shape does not match the architecture");
    }
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      std::string token;
      if (!(in >> token)) throw Error(ErrorKind::Parse, path + ": truncated parameter values");
      p.data()[i] = static_cast<TrainScalar>(parse_real(token, "parameter"));
    }
    std::getline(in, line);  // rest of the value line
    std::getline(in, line);
  }
  if (config_out) *config_out = config;
  return model;
}

double saliency_outside_fraction(const Model& model, std::span<const LabeledSample> samples,
                                 std::span<const SegMask> masks) {
  if (samples.size() != masks.size() || samples.empty()) {
    throw Error(ErrorKind::Parameter, "saliency_outside_fraction needs one mask per sample");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample* s = &samples[i];
    const SegMask* m = &masks[i];
    const auto batch = make_batch<TrainScalar>(std::span<const LabeledSample* const>(&s, 1), std::span<const SegMask* const>(&m, 1));
    ad::Tape<TrainScalar> tape;
    const auto params = model.bind(tape, false);
    const Mat g = saliency<TrainScalar>(model, params, batch).value();
    const double total = g.cwiseAbs2().sum();
    const double outside = (g.array().square() * (1.0f - batch.masks.array())).sum();
    sum += total > 0.0 ? outside / total : 0.0;
  }
  return sum / samples.size();
}

}  // namespace maskdg
