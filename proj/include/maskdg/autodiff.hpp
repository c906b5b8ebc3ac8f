#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every operation records a node on a Tape. Backward rules are themselves
// written in terms of recorded operations, so when gradient() is called with
// create_graph = true the gradient is part of the graph and can be
// differentiated again (double backpropagation, needed by input-gradient
// penalties).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace maskdg::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape<Scalar>& tape() const { return *tape_; }

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar item() const { return value()(0, 0); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

// A linear map together with its adjoint. Differentiating through forward
// yields adjoint and vice versa, so structural ops (im2col, pooling, sums)
// are differentiable to any order.
template <typename Scalar>
struct LinearOp {
  using Fn = std::function<Matrix<Scalar>(const Matrix<Scalar>&)>;
  Fn forward;
  Fn adjoint;

  LinearOp transposed() const { return {adjoint, forward}; }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using VarT = Var<Scalar>;
  using Backward = std::function<std::vector<VarT>(const VarT& self, const VarT& upstream,
                                                   const std::vector<bool>& needed)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarT variable(Mat value) { return push(std::move(value), {}, {}, true); }
  VarT constant(Mat value) { return push(std::move(value), {}, {}, false); }

  VarT record(Mat value, std::vector<int> parents, Backward backward) {
    bool needs = false;
    if (recording_) {
      for (int p : parents) needs = needs || nodes_[p].requires_grad;
    }
    if (!needs) return push(std::move(value), {}, {}, false);
    return push(std::move(value), std::move(parents), std::move(backward), true);
  }

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a scalar (1x1) output with respect to each of `wrt`.
  // Inputs the output does not depend on receive a zero matrix.
  std::vector<VarT> gradient(const VarT& output, std::span<const VarT> wrt,
                             bool create_graph = false) {
    if (output.rows() != 1 || output.cols() != 1) {
      throw std::invalid_argument("gradient: output must be a 1x1 scalar");
    }
    const int out = output.id();
    int lo = out;
    std::vector<char> dep(out + 1, 0);
    for (const VarT& v : wrt) {
      if (v.id() <= out) {
        dep[v.id()] = 1;
        lo = std::min(lo, v.id());
      }
    }
    for (int i = lo; i <= out; ++i) {
      if (dep[i] || !nodes_[i].requires_grad) continue;
      for (int p : nodes_[i].parents) {
        if (p >= lo && dep[p]) {
          dep[i] = 1;
          break;
        }
      }
    }

    std::vector<VarT> grads(out + 1);
    const bool saved = recording_;
    recording_ = create_graph;
    grads[out] = constant(Mat::Ones(1, 1));
    for (int i = out; i >= lo; --i) {
      if (!dep[i] || !grads[i].valid() || nodes_[i].parents.empty()) continue;
      const std::vector<int> parents = nodes_[i].parents;
      std::vector<bool> needed(parents.size());
      for (std::size_t k = 0; k < parents.size(); ++k) {
        needed[k] = parents[k] >= lo && dep[parents[k]];
      }
      const Backward backward = nodes_[i].backward;
      std::vector<VarT> pg = backward(VarT(this, i), grads[i], needed);
      for (std::size_t k = 0; k < parents.size(); ++k) {
        if (!needed[k] || !pg[k].valid()) continue;
        VarT& slot = grads[parents[k]];
        slot = slot.valid() ? accumulate(slot, pg[k]) : pg[k];
      }
    }
    recording_ = saved;

    std::vector<VarT> result;
    result.reserve(wrt.size());
    for (const VarT& v : wrt) {
      if (v.id() <= out && grads[v.id()].valid()) {
        result.push_back(grads[v.id()]);
      } else {
        result.push_back(constant(Mat::Zero(v.rows(), v.cols())));
      }
    }
    return result;
  }

 private:
  struct Node {
    Mat value;
    std::vector<int> parents;
    Backward backward;
    bool requires_grad = false;
  };

  VarT push(Mat value, std::vector<int> parents, Backward backward, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), std::move(parents), std::move(backward), requires_grad});
    return VarT(this, static_cast<int>(nodes_.size()) - 1);
  }

  VarT accumulate(const VarT& a, const VarT& b) {
    Mat sum = a.value() + b.value();
    return record(std::move(sum), {a.id(), b.id()},
                  [](const VarT&, const VarT& g, const std::vector<bool>&) {
                    return std::vector<VarT>{g, g};
                  });
  }

  // deque keeps node references stable while backward rules append nodes.
  std::deque<Node> nodes_;
  bool recording_ = true;
};

namespace detail {

template <typename Scalar>
void check_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("autodiff: vars from different tapes");
}

template <typename Scalar>
void check_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op);
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return a.tape().record(a.value() * s, {a.id()},
                         [s](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>&) {
                           return std::vector<Var<Scalar>>{scale(g, s)};
                         });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a.id(), b.id()},
                         [](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>&) {
                           return std::vector<Var<Scalar>>{g, g};
                         });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a.id(), b.id()},
                         [](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>& needed) {
                           std::vector<Var<Scalar>> out{g, Var<Scalar>{}};
                           if (needed[1]) out[1] = scale(g, Scalar(-1));
                           return out;
                         });
}

template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::check_same_tape(a, b);
  detail::check_same_shape(a, b, "cwise_product");
  return a.tape().record(
      a.value().cwiseProduct(b.value()), {a.id(), b.id()},
      [a, b](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>& needed) {
        std::vector<Var<Scalar>> out(2);
        if (needed[0]) out[0] = cwise_product(g, b);
        if (needed[1]) out[1] = cwise_product(g, a);
        return out;
      });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  return cwise_product(a, a);
}

// Elementwise product with a constant matrix.
template <typename Scalar>
Var<Scalar> masked(const Var<Scalar>& a, Matrix<Scalar> mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw std::invalid_argument("autodiff: shape mismatch in masked");
  }
  Matrix<Scalar> value = a.value().cwiseProduct(mask);
  return a.tape().record(
      std::move(value), {a.id()},
      [mask = std::move(mask)](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>&) {
        return std::vector<Var<Scalar>>{masked(g, mask)};
      });
}

template <typename Scalar>
Var<Scalar> add_constant(const Var<Scalar>& a, const Matrix<Scalar>& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) {
    throw std::invalid_argument("autodiff: shape mismatch in add_constant");
  }
  return a.tape().record(a.value() + c, {a.id()},
                         [](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>&) {
                           return std::vector<Var<Scalar>>{g};
                         });
}

// C = op(A) * op(B) where op transposes when the flag is set.
template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b, bool ta = false, bool tb = false) {
  detail::check_same_tape(a, b);
  const Eigen::Index inner_a = ta ? a.rows() : a.cols();
  const Eigen::Index inner_b = tb ? b.cols() : b.rows();
  if (inner_a != inner_b) throw std::invalid_argument("autodiff: shape mismatch in matmul");
  Matrix<Scalar> value;
  if (!ta && !tb) {
    value.noalias() = a.value() * b.value();
  } else if (ta && !tb) {
    value.noalias() = a.value().transpose() * b.value();
  } else if (!ta && tb) {
    value.noalias() = a.value() * b.value().transpose();
  } else {
    value.noalias() = a.value().transpose() * b.value().transpose();
  }
  return a.tape().record(
      std::move(value), {a.id(), b.id()},
      [a, b, ta, tb](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>& needed) {
        std::vector<Var<Scalar>> out(2);
        if (needed[0]) out[0] = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
        if (needed[1]) out[1] = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
        return out;
      });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& a, LinearOp<Scalar> op) {
  Matrix<Scalar> value = op.forward(a.value());
  return a.tape().record(
      std::move(value), {a.id()},
      [op = std::move(op)](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>&) {
        return std::vector<Var<Scalar>>{linear(g, op.transposed())};
      });
}

// Sum of all entries as a 1x1 matrix.
template <typename Scalar>
LinearOp<Scalar> sum_all_op(Eigen::Index rows, Eigen::Index cols) {
  return {[](const Matrix<Scalar>& m) { return Matrix<Scalar>::Constant(1, 1, m.sum()); },
          [rows, cols](const Matrix<Scalar>& g) {
            return Matrix<Scalar>::Constant(rows, cols, g(0, 0));
          }};
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  return linear(a, sum_all_op<Scalar>(a.rows(), a.cols()));
}

// (R, C) -> (R, 1) row sums; adjoint replicates across C columns.
template <typename Scalar>
LinearOp<Scalar> row_sum_op(Eigen::Index cols) {
  return {[](const Matrix<Scalar>& m) -> Matrix<Scalar> { return m.rowwise().sum(); },
          [cols](const Matrix<Scalar>& g) -> Matrix<Scalar> { return g.replicate(1, cols); }};
}

// Replaces each column by its column sum in every row. Self-adjoint.
template <typename Scalar>
LinearOp<Scalar> column_sum_broadcast_op() {
  auto fn = [](const Matrix<Scalar>& m) -> Matrix<Scalar> {
    return m.colwise().sum().replicate(m.rows(), 1);
  };
  return {fn, fn};
}

// Adds a column vector to every column.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  detail::check_same_tape(a, bias);
  if (bias.cols() != 1 || bias.rows() != a.rows()) {
    throw std::invalid_argument("autodiff: bias shape mismatch");
  }
  Matrix<Scalar> value = a.value().colwise() + bias.value().col(0);
  const Eigen::Index cols = a.cols();
  return a.tape().record(
      std::move(value), {a.id(), bias.id()},
      [cols](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>& needed) {
        std::vector<Var<Scalar>> out{g, Var<Scalar>{}};
        if (needed[1]) out[1] = linear(g, row_sum_op<Scalar>(cols));
        return out;
      });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Matrix<Scalar> step = (a.value().array() > Scalar(0)).template cast<Scalar>().matrix();
  Matrix<Scalar> value = a.value().cwiseProduct(step);
  return a.tape().record(
      std::move(value), {a.id()},
      [step = std::move(step)](const Var<Scalar>&, const Var<Scalar>& g, const std::vector<bool>&) {
        return std::vector<Var<Scalar>>{masked(g, step)};
      });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  return a.tape().record(a.value().array().exp().matrix(), {a.id()},
                         [](const Var<Scalar>& self, const Var<Scalar>& g, const std::vector<bool>&) {
                           return std::vector<Var<Scalar>>{cwise_product(g, self)};
                         });
}

// Column-wise log-softmax: each column holds the logits of one sample.
template <typename Scalar>
Var<Scalar> log_softmax(const Var<Scalar>& a) {
  const Matrix<Scalar>& z = a.value();
  Matrix<Scalar> value(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const Scalar m = z.col(j).maxCoeff();
    const Scalar lse = m + std::log((z.col(j).array() - m).exp().sum());
    value.col(j) = z.col(j).array() - lse;
  }
  return a.tape().record(
      std::move(value), {a.id()},
      [](const Var<Scalar>& self, const Var<Scalar>& g, const std::vector<bool>&) {
        Var<Scalar> softmax = exp(self);
        Var<Scalar> col_sums = linear(g, column_sum_broadcast_op<Scalar>());
        return std::vector<Var<Scalar>>{g - cwise_product(softmax, col_sums)};
      });
}

// 1/a where a > 0, and 0 elsewhere.
template <typename Scalar>
Var<Scalar> reciprocal_safe(const Var<Scalar>& a) {
  Matrix<Scalar> value =
      a.value().unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) / v : Scalar(0); });
  return a.tape().record(
      std::move(value), {a.id()},
      [](const Var<Scalar>& self, const Var<Scalar>& g, const std::vector<bool>&) {
        return std::vector<Var<Scalar>>{scale(cwise_product(g, square(self)), Scalar(-1))};
      });
}

// sqrt with a zero subgradient at 0, so norms of zero vectors are
// differentiable and contribute nothing.
template <typename Scalar>
Var<Scalar> sqrt_safe(const Var<Scalar>& a) {
  Matrix<Scalar> value =
      a.value().unaryExpr([](Scalar v) { return v > Scalar(0) ? std::sqrt(v) : Scalar(0); });
  return a.tape().record(
      std::move(value), {a.id()},
      [](const Var<Scalar>& self, const Var<Scalar>& g, const std::vector<bool>&) {
        return std::vector<Var<Scalar>>{scale(cwise_product(g, reciprocal_safe(self)), Scalar(0.5))};
      });
}

}  // namespace maskdg::ad
