#include "gmr/kernel.hpp"

#include <cmath>
#include <stdexcept>

#include "gmr/rng.hpp"

namespace gmr {

int default_ring_count(int k) { return (k + 1) / 2; }

RingGeometry ring_geometry(int k, int n, int dims) {
  if (dims != 2 && dims != 3) throw std::invalid_argument("ring_geometry: dims must be 2 or 3");
  if (k < 3 || k % 2 == 0) {
    throw std::invalid_argument("ring_geometry: kernel width must be odd and >= 3");
  }
  if (n < 2) {
    throw std::invalid_argument("ring_geometry: ring spacing undefined for n < 2");
  }
  if (n > (k + 1) / 2) {
    throw std::invalid_argument("ring_geometry: more rings than the grid resolves (n > (k+1)/2)");
  }
  RingGeometry g;
  g.k = k;
  g.dims = dims;
  g.n = n;
  g.delta_d = static_cast<double>(k) / (2.0 * (n - 1));
  g.mu.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) g.mu[static_cast<size_t>(i)] = i * g.delta_d;
  g.mask_radius = 0.5 * k;
  return g;
}

double SigmaParams::sigma(int i) const {
  return std::exp(log_sigma[static_cast<size_t>(i)]);
}

SigmaParams init_sigma(const RingGeometry& g) {
  SigmaParams s;
  s.log_sigma.assign(static_cast<size_t>(g.n), std::log(g.delta_d / kFwhmFactor));
  return s;
}

double sigma_upper_bound(const RingGeometry& g) { return 2.0 * g.n; }

SigmaParams clip_sigma(const SigmaParams& s, const RingGeometry& g) {
  const double lo = std::log(kSigmaMin);
  const double hi = std::log(sigma_upper_bound(g));
  SigmaParams out = s;
  for (double& ls : out.log_sigma) ls = std::clamp(ls, lo, hi);
  return out;
}

RingWeights init_weights(int c_in, int c_out, int n, uint64_t seed) {
  if (c_in < 1 || c_out < 1 || n < 1) throw std::invalid_argument("init_weights: bad extents");
  RingWeights w;
  w.c_out = c_out;
  w.c_in = c_in;
  w.n = n;
  w.w.resize(static_cast<size_t>(static_cast<int64_t>(c_out) * c_in * n));
  const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * n));
  Rng rng(seed);
  for (double& v : w.w) v = rng.normal(0.0, stddev);
  return w;
}

int64_t GaussianRingBasis::ring_size() const {
  int64_t s = 1;
  for (int d = 0; d < dims; ++d) s *= k;
  return s;
}

Tensor<double> GaussianRingBasis::as_tensor() const {
  Shape shape{n};
  for (int d = 0; d < dims; ++d) shape.push_back(k);
  return Tensor<double>(shape, m);
}

namespace {

// Visits each spatial position with its squared integer radius. Offsets run
// over {-(k-1)/2, ..., (k-1)/2}^dims in row-major order, so r2 is exact.
template <typename Fn>
void for_each_radius(int k, int dims, Fn&& fn) {
  const int half = (k - 1) / 2;
  int64_t p = 0;
  if (dims == 2) {
    for (int u = -half; u <= half; ++u) {
      for (int v = -half; v <= half; ++v) {
        fn(p++, static_cast<int64_t>(u) * u + static_cast<int64_t>(v) * v);
      }
    }
  } else {
    for (int u = -half; u <= half; ++u) {
      for (int v = -half; v <= half; ++v) {
        for (int w = -half; w <= half; ++w) {
          fn(p++, static_cast<int64_t>(u) * u + static_cast<int64_t>(v) * v +
                      static_cast<int64_t>(w) * w);
        }
      }
    }
  }
}

bool masked(int64_t r2, int k) {
  // r > k/2  <=>  4*r2 > k*k, all in exact integer arithmetic
  return 4 * r2 > static_cast<int64_t>(k) * k;
}

}  // namespace

GaussianRingBasis build_basis(const RingGeometry& g, const SigmaParams& s) {
  if (s.n() != g.n) throw std::invalid_argument("build_basis: sigma length != ring count");
  GaussianRingBasis b;
  b.dims = g.dims;
  b.k = g.k;
  b.n = g.n;
  b.m.assign(static_cast<size_t>(g.n * b.ring_size()), 0.0);
  for (int i = 0; i < g.n; ++i) {
    const double mu = g.mu[static_cast<size_t>(i)];
    const double sig = s.sigma(i);
    const double inv2s2 = 1.0 / (2.0 * sig * sig);
    double* ring = b.ring(i);
    for_each_radius(g.k, g.dims, [&](int64_t p, int64_t r2) {
      if (masked(r2, g.k)) return;
      const double r = std::sqrt(static_cast<double>(r2));
      const double d = r - mu;
      ring[p] = std::exp(-d * d * inv2s2);
    });
  }
  return b;
}

GaussianRingBasis build_nearest_ring_basis(const RingGeometry& g) {
  GaussianRingBasis b;
  b.dims = g.dims;
  b.k = g.k;
  b.n = g.n;
  b.m.assign(static_cast<size_t>(g.n * b.ring_size()), 0.0);
  for_each_radius(g.k, g.dims, [&](int64_t p, int64_t r2) {
    if (masked(r2, g.k)) return;
    const double r = std::sqrt(static_cast<double>(r2));
    int best = 0;
    double best_d = std::abs(r - g.mu[0]);
    for (int i = 1; i < g.n; ++i) {
      const double d = std::abs(r - g.mu[static_cast<size_t>(i)]);
      if (d < best_d) {  // ties keep the smaller index
        best_d = d;
        best = i;
      }
    }
    b.ring(best)[p] = 1.0;
  });
  return b;
}

GaussianRingBasis basis_sigma_jacobian(const RingGeometry& g, const SigmaParams& s) {
  if (s.n() != g.n) throw std::invalid_argument("basis_sigma_jacobian: sigma length != ring count");
  GaussianRingBasis j;
  j.dims = g.dims;
  j.k = g.k;
  j.n = g.n;
  j.m.assign(static_cast<size_t>(g.n * j.ring_size()), 0.0);
  for (int i = 0; i < g.n; ++i) {
    const double mu = g.mu[static_cast<size_t>(i)];
    const double sig = s.sigma(i);
    const double inv_s2 = 1.0 / (sig * sig);
    double* ring = j.ring(i);
    for_each_radius(g.k, g.dims, [&](int64_t p, int64_t r2) {
      if (masked(r2, g.k)) return;
      const double r = std::sqrt(static_cast<double>(r2));
      const double d = r - mu;
      ring[p] = std::exp(-0.5 * d * d * inv_s2) * d * d * inv_s2;
    });
  }
  return j;
}

GmrLayerParams make_layer_params(int k, int n, int dims, int c_in, int c_out,
                                 uint64_t seed) {
  GmrLayerParams p;
  p.geometry = ring_geometry(k, n, dims);
  p.weights = init_weights(c_in, c_out, n, seed);
  p.sigma = clip_sigma(init_sigma(p.geometry), p.geometry);
  return p;
}

void validate(const GmrLayerParams& p) {
  if (p.weights.n != p.geometry.n || p.sigma.n() != p.geometry.n) {
    throw std::invalid_argument("GmrLayerParams: ring count mismatch");
  }
  for (double v : p.weights.w) {
    if (!std::isfinite(v)) throw std::invalid_argument("GmrLayerParams: non-finite weight");
  }
}

Tensor<double> materialize_kernel(const GmrLayerParams& p,
                                  const GaussianRingBasis& basis) {
  if (basis.n != p.geometry.n || basis.k != p.geometry.k || basis.dims != p.geometry.dims) {
    throw std::invalid_argument("materialize_kernel: basis does not match geometry");
  }
  const RingWeights& w = p.weights;
  const int64_t ring = basis.ring_size();
  Shape shape{w.c_out, w.c_in};
  for (int d = 0; d < basis.dims; ++d) shape.push_back(basis.k);
  Tensor<double> out(shape);
  double* dst = out.data();
  for (int o = 0; o < w.c_out; ++o) {
    for (int c = 0; c < w.c_in; ++c, dst += ring) {
      for (int i = 0; i < w.n; ++i) {
        const double wi = w.at(o, c, i);
        const double* src = basis.ring(i);
        for (int64_t q = 0; q < ring; ++q) dst[q] += wi * src[q];
      }
    }
  }
  return out;
}

ParameterCount parameter_count(int c_in, int c_out, const RingGeometry& g) {
  ParameterCount pc;
  pc.gmr = static_cast<int64_t>(c_in) * c_out * g.n + g.n;
  int64_t kd = 1;
  for (int d = 0; d < g.dims; ++d) kd *= g.k;
  pc.dense = static_cast<int64_t>(c_in) * c_out * kd;
  return pc;
}

}  // namespace gmr
