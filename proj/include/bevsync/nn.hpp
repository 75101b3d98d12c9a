#pragma once

#include "bevsync/core.hpp"

#include <cmath>
#include <string>

namespace bevsync::nn {

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void reluInPlace(Tensor3d& t) {
  for (auto& p : t.planes) p = p.cwiseMax(0.0);
}

/// Per-channel PReLU: x for x >= 0, slope[c] * x otherwise.
inline void preluInPlace(Tensor3d& t, const VectorD& slope) {
  require(static_cast<int>(slope.size()) == t.channels(),
          "prelu: slope size does not match channel count");
  for (int c = 0; c < t.channels(); ++c) {
    auto& p = t[c];
    p = p.cwiseMax(0.0) + slope[c] * p.cwiseMin(0.0);
  }
}

/// 2-D convolution parameters. Weight rows are output channels, columns the
/// flattened (cin, kr, kc) patch.
struct Conv2dParams {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  MatrixD weight;  // out_channels x (in_channels * kernel * kernel)
  VectorD bias;    // out_channels

  static Conv2dParams zeros(int cin, int cout, int k, int stride, int pad) {
    Conv2dParams p;
    p.in_channels = cin;
    p.out_channels = cout;
    p.kernel = k;
    p.stride = stride;
    p.pad = pad;
    p.weight = MatrixD::Zero(cout, cin * k * k);
    p.bias = VectorD::Zero(cout);
    return p;
  }

  static Conv2dParams seeded(int cin, int cout, int k, int stride, int pad,
                             Rng& rng) {
    Conv2dParams p = zeros(cin, cout, k, stride, pad);
    const double s = std::sqrt(6.0 / (cin * k * k + cout));
    for (int r = 0; r < p.weight.rows(); ++r)
      for (int c = 0; c < p.weight.cols(); ++c)
        p.weight(r, c) = rng.uniform(-s, s);
    return p;
  }

  /// Channel-wise identity: kernel center passes channel c through.
  static Conv2dParams identity(int channels, int k) {
    Conv2dParams p = zeros(channels, channels, k, 1, k / 2);
    const int center = (k / 2) * k + k / 2;
    for (int c = 0; c < channels; ++c) p.weight(c, c * k * k + center) = 1.0;
    return p;
  }

  void check(int cin) const {
    require(cin == in_channels, "conv2d: input channel mismatch");
    require(weight.rows() == out_channels &&
                weight.cols() == in_channels * kernel * kernel,
            "conv2d: weight shape mismatch");
    require(static_cast<int>(bias.size()) == out_channels,
            "conv2d: bias shape mismatch");
  }
};

/// im2col convolution; out-of-bounds taps read zero.
inline Tensor3d conv2d(const Tensor3d& in, const Conv2dParams& p) {
  p.check(in.channels());
  const int h = in.height(), w = in.width();
  const int ho = (h + 2 * p.pad - p.kernel) / p.stride + 1;
  const int wo = (w + 2 * p.pad - p.kernel) / p.stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output would be empty");

  MatrixD patches = MatrixD::Zero(p.in_channels * p.kernel * p.kernel, ho * wo);
  for (int cin = 0; cin < p.in_channels; ++cin) {
    const auto& plane = in[cin];
    for (int kr = 0; kr < p.kernel; ++kr) {
      for (int kc = 0; kc < p.kernel; ++kc) {
        const int row = (cin * p.kernel + kr) * p.kernel + kc;
        for (int r = 0; r < ho; ++r) {
          const int ir = r * p.stride + kr - p.pad;
          if (ir < 0 || ir >= h) continue;
          for (int c = 0; c < wo; ++c) {
            const int ic = c * p.stride + kc - p.pad;
            if (ic < 0 || ic >= w) continue;
            patches(row, r * wo + c) = plane(ir, ic);
          }
        }
      }
    }
  }

  const MatrixD out = p.weight * patches;
  Tensor3d result(p.out_channels, ho, wo);
  for (int cout = 0; cout < p.out_channels; ++cout) {
    auto& plane = result[cout];
    for (int r = 0; r < ho; ++r)
      for (int c = 0; c < wo; ++c) plane(r, c) = out(cout, r * wo + c) + p.bias[cout];
  }
  return result;
}

/// Affine map y = W x + b.
struct DenseParams {
  MatrixD weight;
  VectorD bias;

  static DenseParams zeros(int in, int out) {
    return {MatrixD::Zero(out, in), VectorD::Zero(out)};
  }

  static DenseParams seeded(int in, int out, Rng& rng) {
    DenseParams p = zeros(in, out);
    const double s = std::sqrt(6.0 / (in + out));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) p.weight(r, c) = rng.uniform(-s, s);
    return p;
  }

  VectorD apply(const VectorD& x) const { return weight * x + bias; }
};

/// Feature-wise normalization with learned scale/shift.
struct LayerNormParams {
  VectorD gamma;
  VectorD beta;
  double eps = 1e-6;

  static LayerNormParams unit(int dim) {
    return {VectorD::Ones(dim), VectorD::Zero(dim)};
  }

  VectorD apply(const VectorD& x) const {
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    return (((x.array() - mean) * inv) * gamma.array() + beta.array()).matrix();
  }
};

/// Stable softmax of a vector of logits.
inline VectorD softmax(const VectorD& logits) {
  const double m = logits.maxCoeff();
  VectorD e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace bevsync::nn
