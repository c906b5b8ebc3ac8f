#pragma once

// Training objectives: cross-entropy (ERM), activation-difference penalty
// (ActDiff) and input-gradient penalty (RRR). All are recorded on the tape
// that owns the bound parameters, so the caller can differentiate `total`.

#include "maskdg/autodiff.hpp"
#include "maskdg/classifier.hpp"
#include "maskdg/core.hpp"
#include "maskdg/masks.hpp"
#include "maskdg/nn_ops.hpp"
#include "maskdg/seeding.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace maskdg {

// A minibatch laid out for the classifier: images and region masks as
// (1, N*H*W) matrices, row-major within each image. masks may be empty when
// the objective needs none.
template <typename Scalar>
struct Batch {
  int height = 0;
  int width = 0;
  ad::Matrix<Scalar> images;
  ad::Matrix<Scalar> masks;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  Eigen::Index pixels() const { return Eigen::Index(height) * width; }
};

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const LabeledSample* const> samples, std::span<const SegMask* const> masks = {}) {
  if (samples.empty()) throw Error(ErrorKind::Parameter, "empty batch");
  if (!masks.empty() && masks.size() != samples.size()) {
    throw Error(ErrorKind::InconsistentSample, "batch needs one mask per sample");
  }
  Batch<Scalar> b;
  b.height = samples.front()->image.height();
  b.width = samples.front()->image.width();
  const Eigen::Index p = b.pixels();
  b.images.resize(1, p * static_cast<Eigen::Index>(samples.size()));
  if (!masks.empty()) b.masks.resize(1, b.images.cols());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const LabeledSample& s = *samples[i];
    if (s.image.height() != b.height || s.image.width() != b.width) {
      throw Error(ErrorKind::InconsistentSample, "batch images differ in shape");
    }
    b.images.middleCols(Eigen::Index(i) * p, p) = s.image.values().template reshaped<Eigen::RowMajor>().transpose().template cast<Scalar>();
    if (!masks.empty()) {
      check_same_shape(s.image, *masks[i]);
      b.masks.middleCols(Eigen::Index(i) * p, p) =
          masks[i]->values().template reshaped<Eigen::RowMajor>().transpose().template cast<Scalar>();
    }
    b.labels.push_back(s.label);
  }
  return b;
}

template <typename Scalar>
struct LossTerms {
  ad::Var<Scalar> total;
  ad::Var<Scalar> classification;
  ad::Var<Scalar> penalty;  // invalid for ERM
};

namespace detail {

template <typename Scalar>
void require_finite(const ad::Matrix<Scalar>& m, const std::string& what) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::NumericalFailure, what + " (max |value| " + std::to_string(double(m.cwiseAbs().maxCoeff())) + ")");
  }
}

template <typename Scalar>
ad::Var<Scalar> cross_entropy(const ad::Var<Scalar>& log_probs, const std::vector<int>& labels) {
  require_finite(log_probs.value(), "non-finite logits");
  const Eigen::Index k = log_probs.rows();
  const int n = static_cast<int>(labels.size());
  ad::Matrix<Scalar> one_hot = ad::Matrix<Scalar>::Zero(k, n);
  for (int i = 0; i < n; ++i) one_hot(labels[i], i) = Scalar(1);
  return ad::scale(ad::sum(ad::masked(log_probs, std::move(one_hot))), Scalar(-1) / Scalar(n));
}

template <typename Scalar>
ad::Var<Scalar> input_var(ad::Tape<Scalar>& tape, const Batch<Scalar>& batch, bool differentiable) {
  return differentiable ? tape.variable(batch.images) : tape.constant(batch.images);
}

template <typename Scalar>
ad::Tape<Scalar>& tape_of(std::span<const ad::Var<Scalar>> params) {
  if (params.empty()) throw Error(ErrorKind::Parameter, "model has no bound parameters");
  return params.front().tape();
}

}  // namespace detail

// Mean cross-entropy of the unmasked batch.
template <typename Scalar>
LossTerms<Scalar> erm_loss(const Classifier<Scalar>& model, std::span<const ad::Var<Scalar>> params,
                           const Batch<Scalar>& batch) {
  auto& tape = detail::tape_of(params);
  const auto x = detail::input_var(tape, batch, false);
  const auto fp = model.forward(x, params, batch.size(), batch.height, batch.width, 0);
  const auto ce = detail::cross_entropy(fp.log_probs, batch.labels);
  return {ce, ce, {}};
}

// Background-shuffled copy of every image in the batch; sample i uses the
// stream derive_seed(seed, {i}).
template <typename Scalar>
ad::Matrix<Scalar> shuffled_images(const Batch<Scalar>& batch, std::uint64_t seed) {
  if (batch.masks.cols() != batch.images.cols()) {
    throw Error(ErrorKind::InconsistentSample, "batch has no region masks");
  }
  using RowRaster = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index p = batch.pixels();
  ad::Matrix<Scalar> out(1, batch.images.cols());
  for (int i = 0; i < batch.size(); ++i) {
    RowRaster x = batch.images.middleCols(Eigen::Index(i) * p, p).template reshaped<Eigen::RowMajor>(batch.height, batch.width);
    MaskRaster seg = batch.masks.middleCols(Eigen::Index(i) * p, p)
                         .template reshaped<Eigen::RowMajor>(batch.height, batch.width)
                         .template cast<std::uint8_t>();
    RowRaster xm = apply_shuffle_mask(x, seg, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    out.middleCols(Eigen::Index(i) * p, p) = xm.template reshaped<Eigen::RowMajor>().transpose();
  }
  return out;
}

// Mean over the batch of ||o_l(x_masked) - o_l(x)||_2, given the masked
// images explicitly.
template <typename Scalar>
LossTerms<Scalar> actdiff_loss_with(const Classifier<Scalar>& model, std::span<const ad::Var<Scalar>> params,
                                    const Batch<Scalar>& batch, const ad::Matrix<Scalar>& masked_images,
                                    Scalar lambda_act, int tap_layer = 0) {
  if (masked_images.rows() != batch.images.rows() || masked_images.cols() != batch.images.cols()) {
    throw Error(ErrorKind::InconsistentSample, "masked images differ in shape from the batch");
  }
  auto& tape = detail::tape_of(params);
  const int n = batch.size();
  const auto fp = model.forward(tape.constant(batch.images), params, n, batch.height, batch.width, tap_layer);
  const auto fm = model.forward(tape.constant(masked_images), params, n, batch.height, batch.width, tap_layer);
  const auto ce = detail::cross_entropy(fp.log_probs, batch.labels);
  const auto diff = fm.tap - fp.tap;
  const auto per_sample = ad::linear(ad::square(diff), ad::per_sample_sum_op<Scalar>(diff.rows(), n, fp.tap_group));
  const auto penalty = ad::scale(ad::sum(ad::sqrt_safe(per_sample)), Scalar(1) / Scalar(n));
  detail::require_finite(penalty.value(), "non-finite activation-difference penalty");
  return {ce + ad::scale(penalty, lambda_act), ce, penalty};
}

template <typename Scalar>
LossTerms<Scalar> actdiff_loss(const Classifier<Scalar>& model, std::span<const ad::Var<Scalar>> params,
                               const Batch<Scalar>& batch, Scalar lambda_act, std::uint64_t seed,
                               int tap_layer = 0) {
  return actdiff_loss_with(model, params, batch, shuffled_images(batch, seed), lambda_act, tap_layer);
}

// d/dx sum_k log p_k for every pixel of every sample, recorded so it can be
// differentiated again.
template <typename Scalar>
ad::Var<Scalar> saliency(const Classifier<Scalar>& model, std::span<const ad::Var<Scalar>> params,
                         const Batch<Scalar>& batch, ad::Var<Scalar>* log_probs = nullptr) {
  if (!model.supports_input_gradients()) {
    throw Error(ErrorKind::UnsupportedModel, model.name() + " cannot differentiate input gradients");
  }
  auto& tape = detail::tape_of(params);
  const auto x = tape.variable(batch.images);
  const auto fp = model.forward(x, params, batch.size(), batch.height, batch.width, 0);
  if (log_probs) *log_probs = fp.log_probs;
  const ad::Var<Scalar> wrt[] = {x};
  auto g = tape.gradient(ad::sum(fp.log_probs), wrt, true).front();
  detail::require_finite(g.value(), "non-finite input gradient");
  return g;
}

// Mean over the batch of sum_p [(1 - seg_p) * d/dx_p sum_k log p_k]^2.
template <typename Scalar>
LossTerms<Scalar> rrr_loss(const Classifier<Scalar>& model, std::span<const ad::Var<Scalar>> params,
                           const Batch<Scalar>& batch, Scalar lambda_rrr) {
  if (batch.masks.cols() != batch.images.cols()) {
    throw Error(ErrorKind::InconsistentSample, "batch has no region masks");
  }
  ad::Var<Scalar> log_probs;
  const auto g = saliency(model, params, batch, &log_probs);
  const auto ce = detail::cross_entropy(log_probs, batch.labels);
  ad::Matrix<Scalar> outside = ad::Matrix<Scalar>::Ones(1, batch.masks.cols()) - batch.masks;
  const auto penalty = ad::scale(ad::sum(ad::square(ad::masked(g, std::move(outside)))), Scalar(1) / Scalar(batch.size()));
  detail::require_finite(penalty.value(), "non-finite input-gradient penalty");
  return {ce + ad::scale(penalty, lambda_rrr), ce, penalty};
}

}  // namespace maskdg
