#pragma once

#include <cstdint>
#include <vector>

#include "gmr/kernel.hpp"
#include "gmr/tensor.hpp"

namespace gmr {

struct ConvConfig {
  int stride = 1;
  std::vector<int> padding;  // one entry per spatial axis
  int dims = 2;

  // "same" contract: stride 1, zero padding floor(k/2) on every spatial axis.
  static ConvConfig same(int k, int dims = 2) {
    ConvConfig c;
    c.dims = dims;
    c.padding.assign(static_cast<size_t>(dims), k / 2);
    return c;
  }
};

// Stride 1 keeps the sliding kernel aligned with rotated inputs; any larger
// stride breaks the equivariance contract even though the math is defined.
inline bool equivariance_preserving(const ConvConfig& cfg) { return cfg.stride == 1; }

// Multiply-accumulate counts per batch element over the given input spatial
// extents: direct H*W*k^d*C_in*C_out vs two-stage H*W*n*(k^d + C_in*C_out).
struct OpCount {
  int64_t direct_macs = 0;
  int64_t gmr_macs = 0;

  double ratio() const {
    return static_cast<double>(gmr_macs) / static_cast<double>(direct_macs);
  }
};

OpCount op_count(int k, int n, int c_in, int c_out,
                 const std::vector<int64_t>& spatial);

// Cross-correlation (deep-learning convention) with zero padding.
// input (B, C_in, spatial...), kernel (C_out, C_in, k, ..., k).
template <typename T>
Tensor<T> conv_direct(const Tensor<T>& input, const Tensor<T>& kernel,
                      const ConvConfig& cfg, int threads = 1);

// Plain nested-loop reference used by the benchmark CLI. The test oracle is a
// separate implementation under tests/ and stays independent of this one.
template <typename T>
Tensor<T> conv_direct_loop(const Tensor<T>& input, const Tensor<T>& kernel,
                           const ConvConfig& cfg);

// Efficient two-stage evaluation: per-ring depthwise convolution of every
// input channel with the masked ring images, then the ring-weight 1x1 mix
// (n*C_in -> C_out). Numerically equal to conv_direct on the materialized
// kernel. ring_basis (n, k, ..., k), ring_weights (C_out, C_in, n).
template <typename T>
Tensor<T> gmr_conv(const Tensor<T>& input, const Tensor<T>& ring_basis,
                   const Tensor<T>& ring_weights, const ConvConfig& cfg,
                   int threads = 1);

// Training-path entry: rebuilds the basis from the current log_sigma.
Tensor<double> gmr_conv(const Tensor<double>& input, const GmrLayerParams& p,
                        const ConvConfig& cfg, int threads = 1);

struct GmrGrads {
  Tensor<double> input;
  RingWeights weights;
  std::vector<double> log_sigma;
};

// Exact reverse-mode derivatives of gmr_conv with respect to the input, the
// ring weights, and log_sigma (through the basis Jacobian).
GmrGrads gmr_conv_backward(const Tensor<double>& input, const GmrLayerParams& p,
                           const ConvConfig& cfg, const Tensor<double>& grad_out,
                           int threads = 1);

struct DenseConvGrads {
  Tensor<double> input;
  Tensor<double> kernel;
};

DenseConvGrads conv_direct_backward(const Tensor<double>& input,
                                    const Tensor<double>& kernel,
                                    const ConvConfig& cfg,
                                    const Tensor<double>& grad_out,
                                    int threads = 1);

}  // namespace gmr
