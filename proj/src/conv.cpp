#include "gmr/conv.hpp"

#include <algorithm>
#include <stdexcept>

#include "gmr/blas.hpp"
#include "gmr/threading.hpp"

namespace gmr {

namespace {

struct ConvShapes {
  int64_t batch = 0;
  int64_t c_in = 0;
  int k = 0;
  std::vector<int64_t> in_spatial;
  std::vector<int64_t> out_spatial;
  int64_t kd = 1;       // k^dims
  int64_t in_size = 1;  // prod(in_spatial)
  int64_t cols = 1;     // prod(out_spatial)
};

ConvShapes resolve_shapes(const Shape& input, int k, const ConvConfig& cfg) {
  const int dims = cfg.dims;
  if (dims != 2 && dims != 3) throw std::invalid_argument("conv: dims must be 2 or 3");
  if (static_cast<int>(input.size()) != dims + 2) {
    throw std::invalid_argument("conv: input rank must be dims + 2");
  }
  if (static_cast<int>(cfg.padding.size()) != dims) {
    throw std::invalid_argument("conv: padding must have one entry per spatial axis");
  }
  if (cfg.stride < 1) throw std::invalid_argument("conv: stride must be >= 1");
  for (int p : cfg.padding) {
    if (p < 0) throw std::invalid_argument("conv: padding must be >= 0");
  }
  ConvShapes s;
  s.batch = input[0];
  s.c_in = input[1];
  s.k = k;
  for (int d = 0; d < dims; ++d) {
    const int64_t in = input[static_cast<size_t>(2 + d)];
    const int64_t span = in + 2 * cfg.padding[static_cast<size_t>(d)] - k;
    if (span < 0 || span % cfg.stride != 0) {
      throw std::invalid_argument("conv: non-integral output extent");
    }
    s.in_spatial.push_back(in);
    s.out_spatial.push_back(span / cfg.stride + 1);
    s.kd *= k;
    s.in_size *= in;
    s.cols *= s.out_spatial.back();
  }
  return s;
}

template <typename T>
int kernel_width_t(const Tensor<T>& kernel, int dims, int first_spatial_axis) {
  const int k = static_cast<int>(kernel.dim(first_spatial_axis));
  for (int d = 1; d < dims; ++d) {
    if (kernel.dim(first_spatial_axis + d) != k) {
      throw std::invalid_argument("conv: kernel must be square");
    }
  }
  return k;
}

// col row r = (c*k + dy)*k + dx (2D) holds the input value under kernel
// offset (dy, dx) for every output position; zero where the offset falls in
// the padding. Row-major (rows x cols), cols = prod(out_spatial).
template <typename T>
void im2col(const T* in, int64_t c_count, const ConvShapes& s, const ConvConfig& cfg,
            T* col, int threads) {
  const int k = s.k;
  const int stride = cfg.stride;
  const int64_t rows = c_count * s.kd;
  if (cfg.dims == 2) {
    const int64_t h = s.in_spatial[0], w = s.in_spatial[1];
    const int64_t ho = s.out_spatial[0], wo = s.out_spatial[1];
    const int pad_y = cfg.padding[0], pad_x = cfg.padding[1];
    parallel_for(rows, threads, [&](int64_t r0, int64_t r1) {
      for (int64_t r = r0; r < r1; ++r) {
        const int64_t c = r / (k * k);
        const int dy = static_cast<int>((r / k) % k);
        const int dx = static_cast<int>(r % k);
        const T* src = in + c * h * w;
        T* dst = col + r * s.cols;
        for (int64_t y = 0; y < ho; ++y) {
          const int64_t iy = y * stride - pad_y + dy;
          T* drow = dst + y * wo;
          if (iy < 0 || iy >= h) {
            std::fill(drow, drow + wo, T{0});
            continue;
          }
          const T* srow = src + iy * w;
          if (stride == 1) {
            const int64_t x_lo = std::max<int64_t>(0, pad_x - dx);
            const int64_t x_hi = std::min<int64_t>(wo, w + pad_x - dx);
            if (x_hi <= x_lo) {
              std::fill(drow, drow + wo, T{0});
              continue;
            }
            std::fill(drow, drow + x_lo, T{0});
            std::copy(srow + (x_lo - pad_x + dx), srow + (x_hi - pad_x + dx), drow + x_lo);
            std::fill(drow + x_hi, drow + wo, T{0});
          } else {
            for (int64_t x = 0; x < wo; ++x) {
              const int64_t ix = x * stride - pad_x + dx;
              drow[x] = (ix < 0 || ix >= w) ? T{0} : srow[ix];
            }
          }
        }
      }
    });
    return;
  }
  const int64_t d = s.in_spatial[0], h = s.in_spatial[1], w = s.in_spatial[2];
  const int64_t dz_o = s.out_spatial[0], ho = s.out_spatial[1], wo = s.out_spatial[2];
  const int pad_z = cfg.padding[0], pad_y = cfg.padding[1], pad_x = cfg.padding[2];
  parallel_for(rows, threads, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const int64_t c = r / s.kd;
      const int64_t rem = r % s.kd;
      const int dz = static_cast<int>(rem / (k * k));
      const int dy = static_cast<int>((rem / k) % k);
      const int dx = static_cast<int>(rem % k);
      const T* src = in + c * d * h * w;
      T* dst = col + r * s.cols;
      for (int64_t z = 0; z < dz_o; ++z) {
        const int64_t iz = z * cfg.stride - pad_z + dz;
        for (int64_t y = 0; y < ho; ++y) {
          T* drow = dst + (z * ho + y) * wo;
          const int64_t iy = y * cfg.stride - pad_y + dy;
          if (iz < 0 || iz >= d || iy < 0 || iy >= h) {
            std::fill(drow, drow + wo, T{0});
            continue;
          }
          const T* srow = src + (iz * h + iy) * w;
          for (int64_t x = 0; x < wo; ++x) {
            const int64_t ix = x * cfg.stride - pad_x + dx;
            drow[x] = (ix < 0 || ix >= w) ? T{0} : srow[ix];
          }
        }
      }
    }
  });
}

// Scatter-add inverse of im2col. Rows of one channel overlap in the input
// plane, so parallelism is across channels only; within a channel the
// accumulation order is fixed.
template <typename T>
void col2im_add(const T* col, int64_t c_count, const ConvShapes& s,
                const ConvConfig& cfg, T* grad_in, int threads) {
  const int k = s.k;
  parallel_for(c_count, threads, [&](int64_t c0, int64_t c1) {
    for (int64_t c = c0; c < c1; ++c) {
      for (int64_t rk = 0; rk < s.kd; ++rk) {
        const int64_t r = c * s.kd + rk;
        const T* src = col + r * s.cols;
        if (cfg.dims == 2) {
          const int dy = static_cast<int>(rk / k), dx = static_cast<int>(rk % k);
          const int64_t h = s.in_spatial[0], w = s.in_spatial[1];
          const int64_t ho = s.out_spatial[0], wo = s.out_spatial[1];
          T* dst = grad_in + c * h * w;
          for (int64_t y = 0; y < ho; ++y) {
            const int64_t iy = y * cfg.stride - cfg.padding[0] + dy;
            if (iy < 0 || iy >= h) continue;
            for (int64_t x = 0; x < wo; ++x) {
              const int64_t ix = x * cfg.stride - cfg.padding[1] + dx;
              if (ix < 0 || ix >= w) continue;
              dst[iy * w + ix] += src[y * wo + x];
            }
          }
        } else {
          const int dz = static_cast<int>(rk / (k * k));
          const int dy = static_cast<int>((rk / k) % k);
          const int dx = static_cast<int>(rk % k);
          const int64_t d = s.in_spatial[0], h = s.in_spatial[1], w = s.in_spatial[2];
          const int64_t dz_o = s.out_spatial[0], ho = s.out_spatial[1], wo = s.out_spatial[2];
          T* dst = grad_in + c * d * h * w;
          for (int64_t z = 0; z < dz_o; ++z) {
            const int64_t iz = z * cfg.stride - cfg.padding[0] + dz;
            if (iz < 0 || iz >= d) continue;
            for (int64_t y = 0; y < ho; ++y) {
              const int64_t iy = y * cfg.stride - cfg.padding[1] + dy;
              if (iy < 0 || iy >= h) continue;
              for (int64_t x = 0; x < wo; ++x) {
                const int64_t ix = x * cfg.stride - cfg.padding[2] + dx;
                if (ix < 0 || ix >= w) continue;
                dst[(iz * h + iy) * w + ix] += src[(z * ho + y) * wo + x];
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
std::vector<T>& scratch_a() {
  static thread_local std::vector<T> buf;
  return buf;
}

template <typename T>
std::vector<T>& scratch_b() {
  static thread_local std::vector<T> buf;
  return buf;
}

Shape out_shape(const ConvShapes& s, int64_t c_out) {
  Shape shape{s.batch, c_out};
  for (int64_t e : s.out_spatial) shape.push_back(e);
  return shape;
}

}  // namespace

OpCount op_count(int k, int n, int c_in, int c_out,
                 const std::vector<int64_t>& spatial) {
  int64_t hw = 1;
  for (int64_t e : spatial) hw *= e;
  int64_t kd = 1;
  for (size_t d = 0; d < spatial.size(); ++d) kd *= k;
  OpCount oc;
  oc.direct_macs = hw * kd * c_in * c_out;
  oc.gmr_macs = hw * n * (kd + static_cast<int64_t>(c_in) * c_out);
  return oc;
}

template <typename T>
Tensor<T> conv_direct(const Tensor<T>& input, const Tensor<T>& kernel,
                      const ConvConfig& cfg, int threads) {
  if (kernel.rank() != cfg.dims + 2) {
    throw std::invalid_argument("conv_direct: kernel rank must be dims + 2");
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv_direct: channel mismatch");
  }
  const int k = kernel_width_t(kernel, cfg.dims, 2);
  const ConvShapes s = resolve_shapes(input.shape(), k, cfg);
  const int64_t c_out = kernel.dim(0);
  const int64_t rows = s.c_in * s.kd;

  Tensor<T> out(out_shape(s, c_out));
  auto& col = scratch_a<T>();
  col.resize(static_cast<size_t>(rows * s.cols));
  for (int64_t b = 0; b < s.batch; ++b) {
    im2col(input.data() + b * s.c_in * s.in_size, s.c_in, s, cfg, col.data(), threads);
    gemm<T>(false, false, c_out, s.cols, rows, T{1}, kernel.data(), rows,
            col.data(), s.cols, T{0}, out.data() + b * c_out * s.cols, s.cols);
  }
  return out;
}

template <typename T>
Tensor<T> conv_direct_loop(const Tensor<T>& input, const Tensor<T>& kernel,
                           const ConvConfig& cfg) {
  if (kernel.rank() != cfg.dims + 2) {
    throw std::invalid_argument("conv_direct_loop: kernel rank must be dims + 2");
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv_direct_loop: channel mismatch");
  }
  const int k = kernel_width_t(kernel, cfg.dims, 2);
  const ConvShapes s = resolve_shapes(input.shape(), k, cfg);
  const int64_t c_out = kernel.dim(0);
  Tensor<T> out(out_shape(s, c_out));

  if (cfg.dims == 2) {
    const int64_t h = s.in_spatial[0], w = s.in_spatial[1];
    const int64_t ho = s.out_spatial[0], wo = s.out_spatial[1];
    for (int64_t b = 0; b < s.batch; ++b) {
      for (int64_t o = 0; o < c_out; ++o) {
        T* dst = out.data() + (b * c_out + o) * s.cols;
        for (int64_t y = 0; y < ho; ++y) {
          for (int64_t x = 0; x < wo; ++x) {
            T acc{0};
            for (int64_t c = 0; c < s.c_in; ++c) {
              const T* src = input.data() + (b * s.c_in + c) * s.in_size;
              const T* ker = kernel.data() + (o * s.c_in + c) * s.kd;
              for (int dy = 0; dy < k; ++dy) {
                const int64_t iy = y * cfg.stride - cfg.padding[0] + dy;
                if (iy < 0 || iy >= h) continue;
                for (int dx = 0; dx < k; ++dx) {
                  const int64_t ix = x * cfg.stride - cfg.padding[1] + dx;
                  if (ix < 0 || ix >= w) continue;
                  acc += ker[dy * k + dx] * src[iy * w + ix];
                }
              }
            }
            dst[y * wo + x] = acc;
          }
        }
      }
    }
    return out;
  }

  const int64_t d = s.in_spatial[0], h = s.in_spatial[1], w = s.in_spatial[2];
  const int64_t dz_o = s.out_spatial[0], ho = s.out_spatial[1], wo = s.out_spatial[2];
  for (int64_t b = 0; b < s.batch; ++b) {
    for (int64_t o = 0; o < c_out; ++o) {
      T* dst = out.data() + (b * c_out + o) * s.cols;
      for (int64_t z = 0; z < dz_o; ++z) {
        for (int64_t y = 0; y < ho; ++y) {
          for (int64_t x = 0; x < wo; ++x) {
            T acc{0};
            for (int64_t c = 0; c < s.c_in; ++c) {
              const T* src = input.data() + (b * s.c_in + c) * s.in_size;
              const T* ker = kernel.data() + (o * s.c_in + c) * s.kd;
              for (int dz = 0; dz < k; ++dz) {
                const int64_t iz = z * cfg.stride - cfg.padding[0] + dz;
                if (iz < 0 || iz >= d) continue;
                for (int dy = 0; dy < k; ++dy) {
                  const int64_t iy = y * cfg.stride - cfg.padding[1] + dy;
                  if (iy < 0 || iy >= h) continue;
                  for (int dx = 0; dx < k; ++dx) {
                    const int64_t ix = x * cfg.stride - cfg.padding[2] + dx;
                    if (ix < 0 || ix >= w) continue;
                    acc += ker[(dz * k + dy) * k + dx] * src[(iz * h + iy) * w + ix];
                  }
                }
              }
            }
            dst[(z * ho + y) * wo + x] = acc;
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> gmr_conv(const Tensor<T>& input, const Tensor<T>& ring_basis,
                   const Tensor<T>& ring_weights, const ConvConfig& cfg,
                   int threads) {
  if (ring_basis.rank() != cfg.dims + 1) {
    throw std::invalid_argument("gmr_conv: basis rank must be dims + 1");
  }
  if (ring_weights.rank() != 3) {
    throw std::invalid_argument("gmr_conv: ring weights must be (c_out, c_in, n)");
  }
  const int64_t n = ring_basis.dim(0);
  if (ring_weights.dim(2) != n) {
    throw std::invalid_argument("gmr_conv: ring count mismatch");
  }
  if (ring_weights.dim(1) != input.dim(1)) {
    throw std::invalid_argument("gmr_conv: channel mismatch");
  }
  const int k = kernel_width_t(ring_basis, cfg.dims, 1);
  const ConvShapes s = resolve_shapes(input.shape(), k, cfg);
  const int64_t c_out = ring_weights.dim(0);
  const int64_t mix_rows = s.c_in * n;

  Tensor<T> out(out_shape(s, c_out));
  auto& stage1 = scratch_b<T>();
  stage1.resize(static_cast<size_t>(s.batch * mix_rows * s.cols));

  // Stage 1: every (batch, channel) plane against all n rings; the per-plane
  // im2col is shared by the rings.
  parallel_for(s.batch * s.c_in, threads, [&](int64_t i0, int64_t i1) {
    static thread_local std::vector<T> col;
    col.resize(static_cast<size_t>(s.kd * s.cols));
    for (int64_t i = i0; i < i1; ++i) {
      const int64_t b = i / s.c_in;
      const int64_t c = i % s.c_in;
      im2col(input.data() + (b * s.c_in + c) * s.in_size, 1, s, cfg, col.data(), 1);
      gemm<T>(false, false, n, s.cols, s.kd, T{1}, ring_basis.data(), s.kd,
              col.data(), s.cols,
              T{0}, stage1.data() + (b * mix_rows + c * n) * s.cols, s.cols);
    }
  });

  // Stage 2: ring weights as a (c_in*n -> c_out) pointwise map.
  parallel_for(s.batch, threads, [&](int64_t b0, int64_t b1) {
    for (int64_t b = b0; b < b1; ++b) {
      gemm<T>(false, false, c_out, s.cols, mix_rows, T{1}, ring_weights.data(),
              mix_rows, stage1.data() + b * mix_rows * s.cols, s.cols, T{0},
              out.data() + b * c_out * s.cols, s.cols);
    }
  });
  return out;
}

Tensor<double> gmr_conv(const Tensor<double>& input, const GmrLayerParams& p,
                        const ConvConfig& cfg, int threads) {
  const GaussianRingBasis basis = build_basis(p.geometry, p.sigma);
  Tensor<double> weights(Shape{p.weights.c_out, p.weights.c_in, p.weights.n},
                         p.weights.w);
  return gmr_conv(input, basis.as_tensor(), weights, cfg, threads);
}

GmrGrads gmr_conv_backward(const Tensor<double>& input, const GmrLayerParams& p,
                           const ConvConfig& cfg, const Tensor<double>& grad_out,
                           int threads) {
  validate(p);
  const GaussianRingBasis basis = build_basis(p.geometry, p.sigma);
  const GaussianRingBasis jac = basis_sigma_jacobian(p.geometry, p.sigma);
  const int64_t n = p.geometry.n;
  const int k = p.geometry.k;
  const ConvShapes s = resolve_shapes(input.shape(), k, cfg);
  const int64_t c_out = p.weights.c_out;
  const int64_t mix_rows = s.c_in * n;
  if (p.weights.c_in != s.c_in) throw std::invalid_argument("gmr_conv_backward: channel mismatch");
  if (grad_out.shape() != out_shape(s, c_out)) {
    throw std::invalid_argument("gmr_conv_backward: grad_out shape mismatch");
  }

  GmrGrads g;
  g.input = Tensor<double>(input.shape());
  g.weights = RingWeights{p.weights.c_out, p.weights.c_in, p.weights.n,
                          std::vector<double>(p.weights.w.size(), 0.0)};
  g.log_sigma.assign(static_cast<size_t>(n), 0.0);

  std::vector<double> stage1(static_cast<size_t>(mix_rows * s.cols));
  std::vector<double> col(static_cast<size_t>(s.kd * s.cols));
  std::vector<double> grad_col(static_cast<size_t>(s.kd * s.cols));
  std::vector<double> grad_basis(static_cast<size_t>(n * s.kd), 0.0);

  for (int64_t b = 0; b < s.batch; ++b) {
    const double* g_b = grad_out.data() + b * c_out * s.cols;

    for (int64_t c = 0; c < s.c_in; ++c) {
      im2col(input.data() + (b * s.c_in + c) * s.in_size, 1, s, cfg, col.data(), threads);
      gemm<double>(false, false, n, s.cols, s.kd, 1.0, basis.m.data(), s.kd,
                   col.data(), s.cols, 0.0, stage1.data() + c * n * s.cols, s.cols);
    }
    // dL/dw = grad_out . stage1^T, accumulated over the batch in index order
    gemm<double>(false, true, c_out, mix_rows, s.cols, 1.0, g_b, s.cols,
                 stage1.data(), s.cols, 1.0, g.weights.w.data(), mix_rows);

    // dL/d(ring maps) = w^T . grad_out; reuses the stage1 buffer
    std::vector<double>& ring_grad = stage1;
    std::vector<double> tmp(static_cast<size_t>(mix_rows * s.cols));
    gemm<double>(true, false, mix_rows, s.cols, c_out, 1.0, p.weights.w.data(),
                 mix_rows, g_b, s.cols, 0.0, tmp.data(), s.cols);
    ring_grad.swap(tmp);

    for (int64_t c = 0; c < s.c_in; ++c) {
      const double* gr_c = ring_grad.data() + c * n * s.cols;
      // input gradient: transposed depthwise convolution via col2im
      gemm<double>(true, false, s.kd, s.cols, n, 1.0, basis.m.data(), s.kd,
                   gr_c, s.cols, 0.0, grad_col.data(), s.cols);
      col2im_add(grad_col.data(), 1, s, cfg,
                 g.input.data() + (b * s.c_in + c) * s.in_size, threads);
      // basis gradient: depthwise weight-gradient against the same im2col
      im2col(input.data() + (b * s.c_in + c) * s.in_size, 1, s, cfg, col.data(), threads);
      gemm<double>(false, true, n, s.kd, s.cols, 1.0, gr_c, s.cols, col.data(),
                   s.cols, 1.0, grad_basis.data(), s.kd);
    }
  }

  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const double* gb = grad_basis.data() + i * s.kd;
    const double* ji = jac.ring(static_cast<int>(i));
    for (int64_t q = 0; q < s.kd; ++q) acc += gb[q] * ji[q];
    g.log_sigma[static_cast<size_t>(i)] = acc;
  }
  return g;
}

DenseConvGrads conv_direct_backward(const Tensor<double>& input,
                                    const Tensor<double>& kernel,
                                    const ConvConfig& cfg,
                                    const Tensor<double>& grad_out, int threads) {
  const int k = kernel_width_t(kernel, cfg.dims, 2);
  if (kernel.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv_direct_backward: channel mismatch");
  }
  const ConvShapes s = resolve_shapes(input.shape(), k, cfg);
  const int64_t c_out = kernel.dim(0);
  const int64_t rows = s.c_in * s.kd;
  if (grad_out.shape() != out_shape(s, c_out)) {
    throw std::invalid_argument("conv_direct_backward: grad_out shape mismatch");
  }

  DenseConvGrads g;
  g.input = Tensor<double>(input.shape());
  g.kernel = Tensor<double>(kernel.shape());

  std::vector<double> col(static_cast<size_t>(rows * s.cols));
  std::vector<double> grad_col(static_cast<size_t>(rows * s.cols));
  for (int64_t b = 0; b < s.batch; ++b) {
    const double* g_b = grad_out.data() + b * c_out * s.cols;
    im2col(input.data() + b * s.c_in * s.in_size, s.c_in, s, cfg, col.data(), threads);
    gemm<double>(false, true, c_out, rows, s.cols, 1.0, g_b, s.cols, col.data(),
                 s.cols, 1.0, g.kernel.data(), rows);
    gemm<double>(true, false, rows, s.cols, c_out, 1.0, kernel.data(), rows, g_b,
                 s.cols, 0.0, grad_col.data(), s.cols);
    col2im_add(grad_col.data(), s.c_in, s, cfg,
               g.input.data() + b * s.c_in * s.in_size, threads);
  }
  return g;
}

template Tensor<float> conv_direct<float>(const Tensor<float>&, const Tensor<float>&,
                                          const ConvConfig&, int);
template Tensor<double> conv_direct<double>(const Tensor<double>&, const Tensor<double>&,
                                            const ConvConfig&, int);
template Tensor<float> conv_direct_loop<float>(const Tensor<float>&, const Tensor<float>&,
                                               const ConvConfig&);
template Tensor<double> conv_direct_loop<double>(const Tensor<double>&, const Tensor<double>&,
                                                 const ConvConfig&);
template Tensor<float> gmr_conv<float>(const Tensor<float>&, const Tensor<float>&,
                                       const Tensor<float>&, const ConvConfig&, int);
template Tensor<double> gmr_conv<double>(const Tensor<double>&, const Tensor<double>&,
                                         const Tensor<double>&, const ConvConfig&, int);

}  // namespace gmr
