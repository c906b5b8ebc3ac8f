#include "maskdg/losses.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace maskdg;

namespace {

using Mat = Eigen::MatrixXd;
using Tape = ad::Tape<double>;
using VarD = ad::Var<double>;

Batch<double> random_batch(int n, int h, int w, std::mt19937_64& rng, double mask_density = 0.5) {
  Batch<double> b;
  b.height = h;
  b.width = w;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  b.images.resize(1, Eigen::Index(n) * h * w);
  b.masks.resize(1, b.images.cols());
  for (Eigen::Index i = 0; i < b.images.cols(); ++i) {
    b.images(0, i) = u(rng);
    b.masks(0, i) = u(rng) < mask_density ? 1.0 : 0.0;
  }
  for (int i = 0; i < n; ++i) b.labels.push_back(i % 2 == 0 ? 1 : int(u(rng) < 0.5));
  return b;
}

SmallCnn<double> tiny_cnn(std::uint64_t seed) {
  CnnArchitecture arch;
  arch.channels = {3, 4};
  arch.first_stride = 1;
  arch.pool = 2;
  arch.input_mean = 0.4;
  arch.input_std = 0.3;
  return SmallCnn<double>(arch, seed);
}

// Value of a loss at the model's current parameters.
template <typename LossFn>
double loss_value(const Classifier<double>& model, LossFn&& fn) {
  Tape tape;
  const auto params = model.bind(tape, false);
  return fn(params).total.item();
}

// Analytic parameter gradient of a loss.
template <typename LossFn>
std::vector<Mat> loss_param_grad(const Classifier<double>& model, LossFn&& fn) {
  Tape tape;
  const auto params = model.bind(tape, true);
  const auto terms = fn(params);
  std::vector<Mat> out;
  for (const VarD& g : tape.gradient(terms.total, params)) out.push_back(g.value());
  return out;
}

// Sum_k log p_k of sample-batched inputs, recomputed outside the tape.
double summed_log_probs(const Classifier<double>& model, const Mat& images, int n, int h, int w) {
  Tape tape;
  const auto params = model.bind(tape, false);
  return model.forward(tape.constant(images), params, n, h, w, 0).log_probs.value().sum();
}

// Logistic regression written out by hand: logits W x + b, two classes.
struct Logistic {
  Mat W;  // (2, P)
  Mat b;  // (2, 1)

  Eigen::Vector2d probs(const Eigen::VectorXd& x) const {
    const Eigen::Vector2d z = W * x + b;
    const double m = z.maxCoeff();
    const Eigen::Vector2d e = (z.array() - m).exp();
    return e / e.sum();
  }
  // d/dx [log p_0 + log p_1] = sum_k W_k - 2 sum_k p_k W_k.
  Eigen::VectorXd summed_log_prob_gradient(const Eigen::VectorXd& x) const {
    const Eigen::Vector2d p = probs(x);
    return W.transpose() * (Eigen::Vector2d::Ones() - 2.0 * p);
  }
};

// Tap = per-sample pixel sum, which no background shuffle can change.
class PooledModel final : public Classifier<double> {
 public:
  PooledModel() : params_{Mat::Constant(2, 1, 0.3), Mat::Zero(2, 1)} { params_[0](1, 0) = -0.2; }
  std::string name() const override { return "pooled"; }
  int num_tap_layers() const override { return 1; }
  std::vector<Mat>& parameters() override { return params_; }
  const std::vector<Mat>& parameters() const override { return params_; }
  ForwardPass<double> forward(const VarD& images, std::span<const VarD> params, int batch, int height, int width,
                              int) const override {
    const Eigen::Index p = Eigen::Index(height) * width;
    ForwardPass<double> out;
    out.tap = ad::linear(images, ad::per_sample_sum_op<double>(1, batch, p));
    out.log_probs = ad::log_softmax(ad::add_bias(ad::matmul(params[0], out.tap), params[1]));
    return out;
  }
  std::unique_ptr<Classifier<double>> clone() const override { return std::make_unique<PooledModel>(*this); }

 private:
  std::vector<Mat> params_;
};

class NoInputGradients final : public Classifier<double> {
 public:
  std::string name() const override { return "frozen-backbone"; }
  int num_tap_layers() const override { return 1; }
  bool supports_input_gradients() const override { return false; }
  std::vector<Mat>& parameters() override { return inner_.parameters(); }
  const std::vector<Mat>& parameters() const override { return inner_.parameters(); }
  ForwardPass<double> forward(const VarD& images, std::span<const VarD> params, int batch, int height, int width,
                              int tap) const override {
    return inner_.forward(images, params, batch, height, width, tap);
  }
  std::unique_ptr<Classifier<double>> clone() const override { return std::make_unique<NoInputGradients>(*this); }

 private:
  DenseClassifier<double> inner_ = DenseClassifier<double>(4, 0, 1);
};

}  // namespace

TEST_SUITE("loss-correctness") {
  TEST_CASE("uniform output gives ln 2") {
    const DenseClassifier<double> model({Mat::Zero(2, 16), Mat::Zero(2, 1)}, 0);
    std::mt19937_64 rng(1);
    const Batch<double> b = random_batch(5, 4, 4, rng);
    Tape tape;
    const auto params = model.bind(tape, false);
    CHECK(erm_loss(model, std::span<const VarD>(params), b).total.item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }

  TEST_CASE("confident correct outputs give zero loss") {
    Mat w = Mat::Zero(2, 4), bias(2, 1);
    bias << -40.0, 40.0;
    const DenseClassifier<double> model({w, bias}, 0);
    std::mt19937_64 rng(2);
    Batch<double> b = random_batch(4, 2, 2, rng);
    b.labels.assign(4, 1);
    Tape tape;
    const auto params = model.bind(tape, false);
    CHECK(erm_loss(model, std::span<const VarD>(params), b).total.item() < 1e-15);
  }

  TEST_CASE("cross-entropy matches a per-sample recomputation") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const DenseClassifier<double> model(9, 5, rng());
      const Batch<double> b = random_batch(7, 3, 3, rng);
      Tape tape;
      const auto params = model.bind(tape, false);
      const double got = erm_loss(model, std::span<const VarD>(params), b).total.item();
      const auto& p = model.parameters();
      double want = 0.0;
      for (int i = 0; i < 7; ++i) {
        const Eigen::VectorXd x = b.images.middleCols(i * 9, 9).transpose();
        const Eigen::VectorXd hidden = (p[0] * x + p[1]).cwiseMax(0.0);
        const Eigen::Vector2d z = p[2] * hidden + p[3];
        const double lse = std::log(std::exp(z(0)) + std::exp(z(1)));
        want += -(z(b.labels[i]) - lse);
      }
      CHECK(got == doctest::Approx(want / 7.0).epsilon(1e-10));
    }
  }

  TEST_CASE("non-finite logits raise a numerical failure") {
    Mat w = Mat::Zero(2, 4);
    w(0, 0) = std::numeric_limits<double>::quiet_NaN();
    const DenseClassifier<double> model({w, Mat::Zero(2, 1)}, 0);
    std::mt19937_64 rng(4);
    const Batch<double> b = random_batch(2, 2, 2, rng);
    Tape tape;
    const auto params = model.bind(tape, false);
    try {
      erm_loss(model, std::span<const VarD>(params), b);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NumericalFailure);
    }
  }

  TEST_CASE("lambda = 0 reduces both objectives to ERM") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const SmallCnn<double> model = tiny_cnn(rng());
      const Batch<double> b = random_batch(3, 8, 8, rng);
      Tape tape;
      const auto params = model.bind(tape, false);
      const std::span<const VarD> ps(params);
      const double erm = erm_loss(model, ps, b).total.item();
      CHECK(std::abs(actdiff_loss(model, ps, b, 0.0, rng()).total.item() - erm) <= 1e-7);
      CHECK(std::abs(rrr_loss(model, ps, b, 0.0).total.item() - erm) <= 1e-7);
      CHECK(actdiff_loss(model, ps, b, 0.0, 1).total.item() == erm);
      CHECK(rrr_loss(model, ps, b, 0.0).total.item() == erm);
    }
  }

  TEST_CASE("all-ones masks give zero penalties") {
    std::mt19937_64 rng(6);
    const SmallCnn<double> model = tiny_cnn(7);
    Batch<double> b = random_batch(4, 8, 8, rng);
    b.masks.setOnes();
    CHECK(shuffled_images(b, 99) == b.images);
    Tape tape;
    const auto params = model.bind(tape, false);
    const std::span<const VarD> ps(params);
    const double erm = erm_loss(model, ps, b).total.item();
    const auto act = actdiff_loss(model, ps, b, 5.0, 99);
    CHECK(act.penalty.item() == 0.0);
    CHECK(act.total.item() == erm);
    const auto rrr = rrr_loss(model, ps, b, 5.0);
    CHECK(rrr.penalty.item() == 0.0);
    CHECK(rrr.total.item() == erm);
  }

  TEST_CASE("ActDiff penalty on a linear encoder matches ||W (x_masked - x)||") {
    std::mt19937_64 rng(8);
    for (int hidden : {0, 6}) {
      const DenseClassifier<double> model(16, hidden, rng());
      const Batch<double> b = random_batch(5, 4, 4, rng);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Mat xm = b.images;
      for (Eigen::Index i = 0; i < xm.size(); ++i) {
        if (b.masks(0, i) == 0.0) xm(0, i) = u(rng);
      }
      Tape tape;
      const auto params = model.bind(tape, false);
      const auto terms = actdiff_loss_with(model, std::span<const VarD>(params), b, xm, 0.25);
      const Mat& W = model.parameters()[0];
      double want = 0.0;
      for (int i = 0; i < 5; ++i) {
        const Eigen::VectorXd d = (xm.middleCols(i * 16, 16) - b.images.middleCols(i * 16, 16)).transpose();
        want += (W * d).norm();
      }
      want /= 5.0;
      CHECK(terms.penalty.item() == doctest::Approx(want).epsilon(1e-12));
      CHECK(terms.total.item() == doctest::Approx(terms.classification.item() + 0.25 * want).epsilon(1e-12));
    }
  }

  TEST_CASE("RRR penalty on 4-pixel logistic regression matches the closed form") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      Logistic lr{Mat(2, 4), Mat(2, 1)};
      for (Eigen::Index i = 0; i < 8; ++i) lr.W.data()[i] = normal(rng);
      lr.b << normal(rng), normal(rng);
      const DenseClassifier<double> model({lr.W, lr.b}, 0);
      const Batch<double> b = random_batch(3, 2, 2, rng);
      Tape tape;
      const auto params = model.bind(tape, false);
      const auto terms = rrr_loss(model, std::span<const VarD>(params), b, 1.0);

      double closed = 0.0, numeric = 0.0;
      for (int i = 0; i < 3; ++i) {
        const Eigen::VectorXd x = b.images.middleCols(i * 4, 4).transpose();
        const Eigen::VectorXd g = lr.summed_log_prob_gradient(x);
        const Mat fd = oracle::central_gradient(
            [&](const Mat& xi) {
              const Eigen::Vector2d p = lr.probs(xi);
              return std::log(p(0)) + std::log(p(1));
            },
            x, 1e-4);
        for (int k = 0; k < 4; ++k) {
          const double outside = 1.0 - b.masks(0, i * 4 + k);
          closed += std::pow(outside * g(k), 2);
          numeric += std::pow(outside * fd(k), 2);
        }
      }
      CHECK(terms.penalty.item() == doctest::Approx(closed / 3.0).epsilon(1e-10));
      CHECK(std::abs(terms.penalty.item() - numeric / 3.0) <= 1e-6);
    }
  }

  TEST_CASE("input gradients match central differences") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 6; ++trial) {
      const SmallCnn<double> cnn = tiny_cnn(rng());
      const DenseClassifier<double> mlp(64, 7, rng());
      for (const Classifier<double>* model : {static_cast<const Classifier<double>*>(&cnn),
                                              static_cast<const Classifier<double>*>(&mlp)}) {
        const Batch<double> b = random_batch(2, 8, 8, rng);
        Tape tape;
        const auto params = model->bind(tape, false);
        const Mat analytic = saliency(*model, std::span<const VarD>(params), b).value();
        const Mat numeric = oracle::central_gradient(
            [&](const Mat& x) { return summed_log_probs(*model, x, 2, 8, 8); }, b.images, 1e-4);
        const double err = oracle::relative_error(analytic, numeric);
        INFO(model->name() << " relative error " << err);
        CHECK(err <= 1e-4);
      }
    }
  }

  TEST_CASE("double backprop: RRR parameter gradients match central differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 3; ++trial) {
      SmallCnn<double> model = tiny_cnn(rng());
      const Batch<double> b = random_batch(2, 8, 8, rng);
      auto loss = [&](std::span<const VarD> ps) { return rrr_loss(model, ps, b, 3.0); };
      const std::vector<Mat> analytic = loss_param_grad(model, loss);
      for (std::size_t k = 0; k < model.parameters().size(); ++k) {
        const Mat numeric = oracle::central_gradient(
            [&](const Mat& p) {
              SmallCnn<double> probe = model;
              probe.parameters()[k] = p;
              return loss_value(probe, [&](std::span<const VarD> ps) { return rrr_loss(probe, ps, b, 3.0); });
            },
            model.parameters()[k], 1e-5);
        const double err = oracle::relative_error(analytic[k], numeric);
        INFO("parameter " << k << " relative error " << err);
        CHECK(err <= 1e-4);
      }
    }
  }

  TEST_CASE("ActDiff parameter gradients match central differences") {
    std::mt19937_64 rng(12);
    SmallCnn<double> model = tiny_cnn(rng());
    const Batch<double> b = random_batch(3, 8, 8, rng);
    const std::uint64_t seed = rng();
    for (int tap : {1, 2}) {
      auto loss = [&](const Classifier<double>& m, std::span<const VarD> ps) { return actdiff_loss(m, ps, b, 0.7, seed, tap); };
      const std::vector<Mat> analytic = loss_param_grad(model, [&](std::span<const VarD> ps) { return loss(model, ps); });
      for (std::size_t k = 0; k < model.parameters().size(); ++k) {
        const Mat numeric = oracle::central_gradient(
            [&](const Mat& p) {
              SmallCnn<double> probe = model;
              probe.parameters()[k] = p;
              return loss_value(probe, [&](std::span<const VarD> ps) { return loss(probe, ps); });
            },
            model.parameters()[k], 1e-5);
        const double err = oracle::relative_error(analytic[k], numeric);
        INFO("tap " << tap << " parameter " << k << " relative error " << err);
        CHECK(err <= 1e-4);
      }
    }
  }

  TEST_CASE("property: penalties are nonnegative and the loss is linear in lambda") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 25; ++trial) {
      const SmallCnn<double> model = tiny_cnn(rng());
      const Batch<double> b = random_batch(3, 8, 8, rng, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
      const std::uint64_t seed = rng();
      Tape tape;
      const auto params = model.bind(tape, false);
      const std::span<const VarD> ps(params);
      const auto a0 = actdiff_loss(model, ps, b, 0.0, seed);
      const auto r0 = rrr_loss(model, ps, b, 0.0);
      REQUIRE(a0.penalty.item() >= 0.0);
      REQUIRE(r0.penalty.item() >= 0.0);
      double prev_a = a0.total.item(), prev_r = r0.total.item();
      for (double lambda : {0.01, 0.5, 2.0, 100.0}) {
        const double a = actdiff_loss(model, ps, b, lambda, seed).total.item();
        const double r = rrr_loss(model, ps, b, lambda).total.item();
        CHECK(a == doctest::Approx(a0.classification.item() + lambda * a0.penalty.item()).epsilon(1e-12));
        CHECK(r == doctest::Approx(r0.classification.item() + lambda * r0.penalty.item()).epsilon(1e-12));
        CHECK(a >= prev_a);
        CHECK(r >= prev_r);
        prev_a = a;
        prev_r = r;
      }
    }
  }

  TEST_CASE("ActDiff penalty: seed-invariant for a pooled tap, seed-deterministic otherwise") {
    std::mt19937_64 rng(14);
    const PooledModel pooled;
    const SmallCnn<double> cnn = tiny_cnn(15);
    const Batch<double> b = random_batch(4, 8, 8, rng, 0.3);
    Tape tape;
    const auto pp = pooled.bind(tape, false);
    const auto cp = cnn.bind(tape, false);
    const double first = actdiff_loss(pooled, std::span<const VarD>(pp), b, 1.0, 0).penalty.item();
    for (std::uint64_t seed = 1; seed < 20; ++seed) {
      CHECK(actdiff_loss(pooled, std::span<const VarD>(pp), b, 1.0, seed).penalty.item() ==
            doctest::Approx(first).epsilon(1e-12));
      const double x = actdiff_loss(cnn, std::span<const VarD>(cp), b, 1.0, seed).penalty.item();
      CHECK(actdiff_loss(cnn, std::span<const VarD>(cp), b, 1.0, seed).penalty.item() == x);
    }
  }

  TEST_CASE("RRR needs differentiable input gradients") {
    const NoInputGradients model;
    std::mt19937_64 rng(16);
    const Batch<double> b = random_batch(2, 2, 2, rng);
    Tape tape;
    const auto params = model.bind(tape, true);
    try {
      rrr_loss(model, std::span<const VarD>(params), b, 1.0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UnsupportedModel);
    }
  }

  TEST_CASE("masked losses reject batches without masks") {
    const SmallCnn<double> model = tiny_cnn(17);
    std::mt19937_64 rng(18);
    Batch<double> b = random_batch(2, 8, 8, rng);
    b.masks.resize(0, 0);
    Tape tape;
    const auto params = model.bind(tape, false);
    CHECK_THROWS_AS(actdiff_loss(model, std::span<const VarD>(params), b, 1.0, 0), Error);
    CHECK_THROWS_AS(rrr_loss(model, std::span<const VarD>(params), b, 1.0), Error);
  }
}

TEST_SUITE("learn") {
  TEST_CASE("classifier outputs are normalized and the tap shape is fixed") {
    std::mt19937_64 rng(19);
    const SmallCnn<double> model = tiny_cnn(20);
    Eigen::Index tap_rows = -1, tap_cols = -1;
    for (int trial = 0; trial < 5; ++trial) {
      const Batch<double> b = random_batch(3, 8, 8, rng);
      Tape tape;
      const auto params = model.bind(tape, false);
      const auto fp = model.forward(tape.constant(b.images), params, 3, 8, 8, 0);
      const Mat p = fp.log_probs.value().array().exp();
      for (Eigen::Index j = 0; j < p.cols(); ++j) CHECK(std::abs(p.col(j).sum() - 1.0) <= 1e-6);
      if (trial > 0) {
        CHECK(fp.tap.rows() == tap_rows);
        CHECK(fp.tap.cols() == tap_cols);
      }
      tap_rows = fp.tap.rows();
      tap_cols = fp.tap.cols();
    }
  }
}
