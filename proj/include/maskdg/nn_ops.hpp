#pragma once

// Structural linear maps for batched feature maps.
//
// A batch of C-channel H x W feature maps is stored as a (C, N*H*W) matrix;
// column n*H*W + r*W + c holds the channel vector of pixel (r, c) of sample n.

#include "maskdg/autodiff.hpp"

namespace maskdg::ad {

struct MapShape {
  int channels = 1;
  int batch = 1;
  int height = 1;
  int width = 1;

  Eigen::Index pixels() const { return Eigen::Index(height) * width; }
  Eigen::Index columns() const { return Eigen::Index(batch) * pixels(); }
};

struct ConvGeometry {
  MapShape input;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_height() const { return (input.height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (input.width + 2 * pad - kernel) / stride + 1; }
  Eigen::Index patch_rows() const { return Eigen::Index(kernel) * kernel * input.channels; }
  MapShape output(int out_channels) const {
    return {out_channels, input.batch, out_height(), out_width()};
  }
};

// Patch extraction with zero padding: (C, N*H*W) -> (k*k*C, N*Ho*Wo).
// Row (ky*k + kx)*C + c of a column holds channel c at kernel tap (ky, kx).
template <typename Scalar>
LinearOp<Scalar> im2col_op(const ConvGeometry& geo) {
  auto forward = [geo](const Matrix<Scalar>& x) {
    const int C = geo.input.channels, H = geo.input.height, W = geo.input.width;
    const int Ho = geo.out_height(), Wo = geo.out_width(), k = geo.kernel;
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(geo.patch_rows(), Eigen::Index(geo.input.batch) * Ho * Wo);
    for (int n = 0; n < geo.input.batch; ++n) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          const Eigen::Index j = (Eigen::Index(n) * Ho + oh) * Wo + ow;
          for (int ky = 0; ky < k; ++ky) {
            const int ih = oh * geo.stride - geo.pad + ky;
            if (ih < 0 || ih >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int iw = ow * geo.stride - geo.pad + kx;
              if (iw < 0 || iw >= W) continue;
              cols.block(Eigen::Index(ky * k + kx) * C, j, C, 1) =
                  x.col(Eigen::Index(n) * H * W + Eigen::Index(ih) * W + iw);
            }
          }
        }
      }
    }
    return cols;
  };
  auto adjoint = [geo](const Matrix<Scalar>& cols) {
    const int C = geo.input.channels, H = geo.input.height, W = geo.input.width;
    const int Ho = geo.out_height(), Wo = geo.out_width(), k = geo.kernel;
    Matrix<Scalar> x = Matrix<Scalar>::Zero(C, geo.input.columns());
    for (int n = 0; n < geo.input.batch; ++n) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          const Eigen::Index j = (Eigen::Index(n) * Ho + oh) * Wo + ow;
          for (int ky = 0; ky < k; ++ky) {
            const int ih = oh * geo.stride - geo.pad + ky;
            if (ih < 0 || ih >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int iw = ow * geo.stride - geo.pad + kx;
              if (iw < 0 || iw >= W) continue;
              x.col(Eigen::Index(n) * H * W + Eigen::Index(ih) * W + iw) +=
                  cols.block(Eigen::Index(ky * k + kx) * C, j, C, 1);
            }
          }
        }
      }
    }
    return x;
  };
  return {forward, adjoint};
}

// Non-overlapping f x f average pooling. Trailing rows/cols that do not fill
// a window are dropped.
template <typename Scalar>
LinearOp<Scalar> avg_pool_op(const MapShape& in, int f) {
  const int Ho = in.height / f, Wo = in.width / f;
  const Scalar inv = Scalar(1) / Scalar(f * f);
  auto forward = [in, f, Ho, Wo, inv](const Matrix<Scalar>& x) {
    Matrix<Scalar> out = Matrix<Scalar>::Zero(in.channels, Eigen::Index(in.batch) * Ho * Wo);
    for (int n = 0; n < in.batch; ++n) {
      for (int r = 0; r < Ho * f; ++r) {
        for (int c = 0; c < Wo * f; ++c) {
          out.col((Eigen::Index(n) * Ho + r / f) * Wo + c / f) +=
              x.col(Eigen::Index(n) * in.pixels() + Eigen::Index(r) * in.width + c);
        }
      }
    }
    return Matrix<Scalar>(out * inv);
  };
  auto adjoint = [in, f, Ho, Wo, inv](const Matrix<Scalar>& g) {
    Matrix<Scalar> x = Matrix<Scalar>::Zero(in.channels, in.columns());
    for (int n = 0; n < in.batch; ++n) {
      for (int r = 0; r < Ho * f; ++r) {
        for (int c = 0; c < Wo * f; ++c) {
          x.col(Eigen::Index(n) * in.pixels() + Eigen::Index(r) * in.width + c) =
              g.col((Eigen::Index(n) * Ho + r / f) * Wo + c / f) * inv;
        }
      }
    }
    return x;
  };
  return {forward, adjoint};
}

// (C, N*G) -> (C, N): mean over each sample's G columns.
template <typename Scalar>
LinearOp<Scalar> global_avg_pool_op(const MapShape& in) {
  const Eigen::Index G = in.pixels();
  const Scalar inv = Scalar(1) / Scalar(G);
  auto forward = [in, G, inv](const Matrix<Scalar>& x) {
    Matrix<Scalar> out(in.channels, in.batch);
    for (int n = 0; n < in.batch; ++n) out.col(n) = x.middleCols(Eigen::Index(n) * G, G).rowwise().sum() * inv;
    return out;
  };
  auto adjoint = [in, G, inv](const Matrix<Scalar>& g) {
    Matrix<Scalar> x(in.channels, in.columns());
    for (int n = 0; n < in.batch; ++n) x.middleCols(Eigen::Index(n) * G, G) = (g.col(n) * inv).replicate(1, G);
    return x;
  };
  return {forward, adjoint};
}

// (R, N*G) -> (1, N): total of each sample's block.
template <typename Scalar>
LinearOp<Scalar> per_sample_sum_op(Eigen::Index rows, int batch, Eigen::Index group) {
  auto forward = [batch, group](const Matrix<Scalar>& x) {
    Matrix<Scalar> out(1, batch);
    for (int n = 0; n < batch; ++n) out(0, n) = x.middleCols(Eigen::Index(n) * group, group).sum();
    return out;
  };
  auto adjoint = [rows, batch, group](const Matrix<Scalar>& g) {
    Matrix<Scalar> x(rows, Eigen::Index(batch) * group);
    for (int n = 0; n < batch; ++n) x.middleCols(Eigen::Index(n) * group, group).setConstant(g(0, n));
    return x;
  };
  return {forward, adjoint};
}

}  // namespace maskdg::ad
