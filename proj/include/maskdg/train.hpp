#pragma once

#include "maskdg/classifier.hpp"
#include "maskdg/core.hpp"
#include "maskdg/masks.hpp"
#include "maskdg/train_config.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maskdg {

using TrainScalar = float;
using Model = Classifier<TrainScalar>;

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double penalty = 0.0;
  double val_auroc = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model> model;        // parameters of the best validation epoch
  std::unique_ptr<Model> final_model;  // parameters after the last epoch
  TrainConfig config;            // as trained, with the input statistics filled in
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val_auroc = 0.0;
};

std::unique_ptr<Model> make_model(const TrainConfig& config);

// Minibatch SGD with momentum and decoupled weight decay on the configured
// objective. Input standardization statistics are taken from the training
// pixels. Deterministic given config.seed. Throws NumericalFailure with
// epoch/batch context if the loss or a gradient becomes non-finite.
TrainResult train(const TrainConfig& config, std::span<const LabeledSample> train_set,
                  std::span<const LabeledSample> val_set, const MaskContext& masks,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// exp(log p_1) for every sample.
std::vector<double> predict_scores(const Model& model, std::span<const LabeledSample> samples, int batch_size = 128);
double evaluate_auroc(const Model& model, std::span<const LabeledSample> samples);

// Training log: header "epoch\ttrain_loss\tpenalty\tval_auroc", one line per epoch.
std::string format_log_header();
std::string format_log_record(const EpochRecord& r);

// Parameter file: "maskdg-model v1", the config fields, then each
// parameter matrix as "param <rows> <cols>" followed by its values in
// column-major order, shortest round-trip decimal text.
void save_model(const std::string& path, const Model& model, const TrainConfig& config);
std::unique_ptr<Model> load_model(const std::string& path, TrainConfig* config = nullptr);

// Input-gradient mass of sum_k log p_k outside `mask` relative to the total,
// sum |g|^2 over (1 - mask) / sum |g|^2, averaged over samples.
double saliency_outside_fraction(const Model& model, std::span<const LabeledSample> samples,
                                 std::span<const SegMask> masks);

}  // namespace maskdg
