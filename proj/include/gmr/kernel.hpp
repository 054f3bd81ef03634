#pragma once

#include <cstdint>
#include <vector>

#include "gmr/tensor.hpp"

namespace gmr {

// sigma init targets FWHM == ring width: sigma = delta_d / (2*sqrt(2*ln 2)).
inline constexpr double kFwhmFactor = 2.3548200450309493;

// Trainable sigma is clamped to [kSigmaMin, 2n].
inline constexpr double kSigmaMin = 1e-2;

// Ring layout of a k x k (x k) kernel split into n concentric rings of equal
// width delta_d = k / (2(n-1)), centers mu_i = (i-1) * delta_d, so mu spans
// [0, k/2]. Everything beyond mask_radius = k/2 is forced to zero (circular
// kernel constraint).
struct RingGeometry {
  int k = 0;
  int dims = 2;
  int n = 0;
  double delta_d = 0.0;
  std::vector<double> mu;
  double mask_radius = 0.0;
};

int default_ring_count(int k);  // (k + 1) / 2

RingGeometry ring_geometry(int k, int n, int dims = 2);

// Per-ring log(sigma), shared by all channels of a layer.
struct SigmaParams {
  std::vector<double> log_sigma;

  int n() const { return static_cast<int>(log_sigma.size()); }
  double sigma(int i) const;
};

SigmaParams init_sigma(const RingGeometry& g);

double sigma_upper_bound(const RingGeometry& g);  // 2n

// Project every sigma into [kSigmaMin, 2n]. Idempotent.
SigmaParams clip_sigma(const SigmaParams& s, const RingGeometry& g);

// Per channel-pair ring coefficients, row-major (c_out, c_in, n).
struct RingWeights {
  int c_out = 0;
  int c_in = 0;
  int n = 0;
  std::vector<double> w;

  double& at(int o, int c, int i) {
    return w[static_cast<size_t>((static_cast<int64_t>(o) * c_in + c) * n + i)];
  }
  double at(int o, int c, int i) const {
    return w[static_cast<size_t>((static_cast<int64_t>(o) * c_in + c) * n + i)];
  }
};

// Zero-mean normal with std sqrt(2 / (c_in * n)); fan-in over the actual
// trainables per output channel.
RingWeights init_weights(int c_in, int c_out, int n, uint64_t seed);

// Discretized, circularly masked ring images, (n, k, k) in 2D and
// (n, k, k, k) in 3D. Values in [0, 1]; exactly invariant under rot90/flips
// of the spatial grid because they depend on the integer radius grid only.
struct GaussianRingBasis {
  int dims = 2;
  int k = 0;
  int n = 0;
  std::vector<double> m;

  int64_t ring_size() const;
  const double* ring(int i) const { return m.data() + static_cast<int64_t>(i) * ring_size(); }
  double* ring(int i) { return m.data() + static_cast<int64_t>(i) * ring_size(); }
  Tensor<double> as_tensor() const;
};

// M[i, p] = exp(-(r(p) - mu_i)^2 / (2 sigma_i^2)) for r(p) <= k/2, else 0.
GaussianRingBasis build_basis(const RingGeometry& g, const SigmaParams& s);

// Unsmoothed ablation basis: each unmasked position belongs wholly to the
// nearest ring center (ties to the smaller index).
GaussianRingBasis build_nearest_ring_basis(const RingGeometry& g);

// d M[i] / d log_sigma_i = M[i, p] * (r - mu_i)^2 / sigma_i^2 (0 when masked).
GaussianRingBasis basis_sigma_jacobian(const RingGeometry& g, const SigmaParams& s);

struct GmrLayerParams {
  RingGeometry geometry;
  RingWeights weights;
  SigmaParams sigma;
};

GmrLayerParams make_layer_params(int k, int n, int dims, int c_in, int c_out,
                                 uint64_t seed);

void validate(const GmrLayerParams& p);

// Dense kernel (c_out, c_in, k, k[, k]): K[o, c] = sum_i w[o, c, i] * M[i].
Tensor<double> materialize_kernel(const GmrLayerParams& p,
                                  const GaussianRingBasis& basis);

struct ParameterCount {
  int64_t gmr = 0;    // c_in * c_out * n + n
  int64_t dense = 0;  // c_in * c_out * k^dims

  double compression() const {
    return static_cast<double>(dense) / static_cast<double>(gmr);
  }
};

ParameterCount parameter_count(int c_in, int c_out, const RingGeometry& g);

}  // namespace gmr
