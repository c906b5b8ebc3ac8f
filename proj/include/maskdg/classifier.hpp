#pragma once

#include "maskdg/autodiff.hpp"
#include "maskdg/nn_ops.hpp"

#include <cmath>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace maskdg {

// Outputs of one batched forward pass.
template <typename Scalar>
struct ForwardPass {
  ad::Var<Scalar> log_probs;  // (K, N) class log-probabilities, one column per sample
  ad::Var<Scalar> tap;        // pre-activation output of the tap layer, (C, N*G)
  Eigen::Index tap_group = 1; // columns of `tap` per sample
};

// A differentiable map from a batch of single-channel images to class
// log-probabilities. Images enter as a (1, N*H*W) matrix, row-major within
// each image. Parameters live outside the tape so one model can be bound to
// many tapes.
template <typename Scalar>
class Classifier {
 public:
  using Mat = ad::Matrix<Scalar>;
  using VarT = ad::Var<Scalar>;

  virtual ~Classifier() = default;

  virtual std::string name() const = 0;
  virtual int num_classes() const { return 2; }
  virtual int num_tap_layers() const = 0;
  // Whether input gradients can themselves be differentiated w.r.t. the
  // parameters.
  virtual bool supports_input_gradients() const { return true; }

  virtual std::vector<Mat>& parameters() = 0;
  virtual const std::vector<Mat>& parameters() const = 0;

  // tap_layer is 1-based; 0 selects the model's default.
  virtual ForwardPass<Scalar> forward(const VarT& images, std::span<const VarT> params, int batch,
                                      int height, int width, int tap_layer) const = 0;

  virtual std::unique_ptr<Classifier> clone() const = 0;

  std::vector<VarT> bind(ad::Tape<Scalar>& tape, bool trainable) const {
    std::vector<VarT> vars;
    vars.reserve(parameters().size());
    for (const Mat& p : parameters()) vars.push_back(trainable ? tape.variable(p) : tape.constant(p));
    return vars;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const Mat& p : parameters()) n += p.size();
    return n;
  }
};

// (1, N*P) -> (P, N): the same memory viewed one sample per column.
template <typename Scalar>
ad::LinearOp<Scalar> flatten_samples_op(Eigen::Index pixels, int batch) {
  return {[pixels, batch](const ad::Matrix<Scalar>& x) {
            return ad::Matrix<Scalar>(x.reshaped(pixels, batch));
          },
          [pixels, batch](const ad::Matrix<Scalar>& g) {
            return ad::Matrix<Scalar>(g.reshaped(1, pixels * batch));
          }};
}

struct CnnArchitecture {
  std::vector<int> channels{8, 16, 16};
  int first_stride = 2;
  int pool = 2;
  // Inputs enter the first convolution as (x - input_mean) / input_std.
  double input_mean = 0.5;
  double input_std = 0.25;
};

// Conv blocks of 3x3 convolution + ReLU with average pooling between
// blocks, then global average pooling and a linear head. Tap layer i is the
// pre-activation output of conv block i.
template <typename Scalar>
class SmallCnn final : public Classifier<Scalar> {
 public:
  using typename Classifier<Scalar>::Mat;
  using typename Classifier<Scalar>::VarT;

  SmallCnn(CnnArchitecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
    std::mt19937_64 rng(seed);
    int in_channels = 1;
    for (int out_channels : arch_.channels) {
      const int fan_in = 9 * in_channels;
      params_.push_back(he_normal(out_channels, fan_in, fan_in, rng));
      params_.push_back(Mat::Zero(out_channels, 1));
      in_channels = out_channels;
    }
    params_.push_back(he_normal(2, in_channels, in_channels, rng) / std::sqrt(Scalar(2)));
    params_.push_back(Mat::Zero(2, 1));
  }

  std::string name() const override { return "small-cnn"; }
  int num_tap_layers() const override { return static_cast<int>(arch_.channels.size()); }
  std::vector<Mat>& parameters() override { return params_; }
  const std::vector<Mat>& parameters() const override { return params_; }
  const CnnArchitecture& architecture() const { return arch_; }

  ForwardPass<Scalar> forward(const VarT& images, std::span<const VarT> params, int batch, int height,
                              int width, int tap_layer) const override {
    const int blocks = num_tap_layers();
    if (tap_layer <= 0) tap_layer = blocks;
    ad::MapShape shape{1, batch, height, width};
    VarT h = ad::scale(ad::add_constant(images, Mat(Mat::Constant(1, images.cols(), Scalar(-arch_.input_mean)))),
                       Scalar(1.0 / arch_.input_std));
    ForwardPass<Scalar> out;
    for (int b = 0; b < blocks; ++b) {
      ad::ConvGeometry geo{shape, 3, b == 0 ? arch_.first_stride : 1, 1};
      VarT cols = ad::linear(h, ad::im2col_op<Scalar>(geo));
      VarT z = ad::add_bias(ad::matmul(params[2 * b], cols), params[2 * b + 1]);
      shape = geo.output(arch_.channels[b]);
      if (b + 1 == tap_layer) {
        out.tap = z;
        out.tap_group = shape.pixels();
      }
      h = ad::relu(z);
      if (b + 1 < blocks && arch_.pool > 1) {
        h = ad::linear(h, ad::avg_pool_op<Scalar>(shape, arch_.pool));
        shape = {shape.channels, batch, shape.height / arch_.pool, shape.width / arch_.pool};
      }
    }
    VarT pooled = ad::linear(h, ad::global_avg_pool_op<Scalar>(shape));
    VarT logits = ad::add_bias(ad::matmul(params[2 * blocks], pooled), params[2 * blocks + 1]);
    out.log_probs = ad::log_softmax(logits);
    return out;
  }

  std::unique_ptr<Classifier<Scalar>> clone() const override {
    return std::make_unique<SmallCnn>(*this);
  }

 private:
  static Mat he_normal(int rows, int cols, int fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    Mat w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(normal(rng));
    return w;
  }

  CnnArchitecture arch_;
  std::vector<Mat> params_;
};

// Fully connected classifier on flattened pixels. With hidden = 0 it is
// multinomial logistic regression and the tap is the logits; otherwise the
// tap is the hidden layer's pre-activation.
template <typename Scalar>
class DenseClassifier final : public Classifier<Scalar> {
 public:
  using typename Classifier<Scalar>::Mat;
  using typename Classifier<Scalar>::VarT;

  DenseClassifier(int pixels, int hidden, std::uint64_t seed) : hidden_(hidden) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto init = [&](int rows, int cols) {
      Mat w(rows, cols);
      const double s = 1.0 / std::sqrt(double(cols));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(s * normal(rng));
      return w;
    };
    if (hidden_ > 0) {
      params_ = {init(hidden_, pixels), Mat::Zero(hidden_, 1), init(2, hidden_), Mat::Zero(2, 1)};
    } else {
      params_ = {init(2, pixels), Mat::Zero(2, 1)};
    }
  }

  DenseClassifier(std::vector<Mat> params, int hidden) : hidden_(hidden), params_(std::move(params)) {}

  std::string name() const override { return hidden_ > 0 ? "mlp" : "logistic"; }
  int num_tap_layers() const override { return 1; }
  std::vector<Mat>& parameters() override { return params_; }
  const std::vector<Mat>& parameters() const override { return params_; }

  ForwardPass<Scalar> forward(const VarT& images, std::span<const VarT> params, int batch, int height,
                              int width, int) const override {
    const Eigen::Index pixels = Eigen::Index(height) * width;
    VarT x = ad::linear(images, flatten_samples_op<Scalar>(pixels, batch));
    ForwardPass<Scalar> out;
    VarT logits;
    if (hidden_ > 0) {
      VarT z = ad::add_bias(ad::matmul(params[0], x), params[1]);
      out.tap = z;
      logits = ad::add_bias(ad::matmul(params[2], ad::relu(z)), params[3]);
    } else {
      logits = ad::add_bias(ad::matmul(params[0], x), params[1]);
      out.tap = logits;
    }
    out.log_probs = ad::log_softmax(logits);
    return out;
  }

  std::unique_ptr<Classifier<Scalar>> clone() const override {
    return std::make_unique<DenseClassifier>(*this);
  }

 private:
  int hidden_;
  std::vector<Mat> params_;
};

}  // namespace maskdg
