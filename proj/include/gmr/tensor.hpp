#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmr/rng.hpp"

namespace gmr {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

// Dense row-major tensor (last axis fastest). Layouts used by the library are
// batch x channels x H x W in 2D and batch x channels x D x H x W in 3D.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    for (int64_t e : shape_) {
      if (e < 1) throw std::invalid_argument("Tensor: extents must be >= 1");
    }
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    for (int64_t e : shape_) {
      if (e < 1) throw std::invalid_argument("Tensor: extents must be >= 1");
    }
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
      throw std::invalid_argument("Tensor: data length does not match shape");
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  Shape strides() const {
    Shape st(shape_.size());
    int64_t acc = 1;
    for (int i = rank() - 1; i >= 0; --i) {
      st[static_cast<size_t>(i)] = acc;
      acc *= shape_[static_cast<size_t>(i)];
    }
    return st;
  }

  template <typename... Ix>
  int64_t offset(Ix... ix) const {
    static_assert((std::is_integral_v<Ix> && ...));
    const std::array<int64_t, sizeof...(Ix)> idx{static_cast<int64_t>(ix)...};
    if (static_cast<int>(idx.size()) != rank()) {
      throw std::invalid_argument("Tensor: index rank mismatch");
    }
    int64_t off = 0;
    for (size_t a = 0; a < idx.size(); ++a) off = off * shape_[a] + idx[a];
    return off;
  }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data_[static_cast<size_t>(offset(ix...))];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data_[static_cast<size_t>(offset(ix...))];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> random_normal(const Shape& shape, Rng& rng, double mean = 0.0,
                        double stddev = 1.0) {
  Tensor<T> t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

namespace detail {

inline void unravel(int64_t flat, const Shape& shape, int64_t* idx) {
  for (int a = static_cast<int>(shape.size()) - 1; a >= 0; --a) {
    idx[a] = flat % shape[static_cast<size_t>(a)];
    flat /= shape[static_cast<size_t>(a)];
  }
}

inline int64_t ravel(const int64_t* idx, const Shape& shape) {
  int64_t off = 0;
  for (size_t a = 0; a < shape.size(); ++a) off = off * shape[a] + idx[a];
  return off;
}

}  // namespace detail

// Exact quarter-turn rotation in the (axis0, axis1) plane; counter-clockwise
// for positive turns, pure index permutation. The two plane extents must be
// equal so the shape is preserved.
template <typename T>
Tensor<T> rot90(const Tensor<T>& t, int quarter_turns, int axis0, int axis1) {
  const int r = t.rank();
  if (axis0 < 0 || axis1 < 0 || axis0 >= r || axis1 >= r || axis0 == axis1) {
    throw std::invalid_argument("rot90: invalid plane axes");
  }
  const int64_t n0 = t.dim(axis0);
  if (n0 != t.dim(axis1)) {
    throw std::invalid_argument("rot90: plane extents differ");
  }
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return t;

  Tensor<T> out(t.shape());
  const Shape& shape = t.shape();
  std::vector<int64_t> idx(static_cast<size_t>(r));
  for (int64_t f = 0; f < t.numel(); ++f) {
    detail::unravel(f, shape, idx.data());
    const int64_t i = idx[static_cast<size_t>(axis0)];
    const int64_t j = idx[static_cast<size_t>(axis1)];
    int64_t si = 0, sj = 0;
    switch (q) {
      case 1: si = j; sj = n0 - 1 - i; break;
      case 2: si = n0 - 1 - i; sj = n0 - 1 - j; break;
      default: si = n0 - 1 - j; sj = i; break;
    }
    idx[static_cast<size_t>(axis0)] = si;
    idx[static_cast<size_t>(axis1)] = sj;
    out[f] = t[detail::ravel(idx.data(), shape)];
  }
  return out;
}

// Rotate the last two axes (default plane for image layouts).
template <typename T>
Tensor<T> rot90(const Tensor<T>& t, int quarter_turns = 1) {
  return rot90(t, quarter_turns, t.rank() - 2, t.rank() - 1);
}

template <typename T>
Tensor<T> flip(const Tensor<T>& t, int axis) {
  if (axis < 0 || axis >= t.rank()) throw std::invalid_argument("flip: bad axis");
  Tensor<T> out(t.shape());
  const Shape& shape = t.shape();
  const int64_t n = t.dim(axis);
  std::vector<int64_t> idx(static_cast<size_t>(t.rank()));
  for (int64_t f = 0; f < t.numel(); ++f) {
    detail::unravel(f, shape, idx.data());
    idx[static_cast<size_t>(axis)] = n - 1 - idx[static_cast<size_t>(axis)];
    out[f] = t[detail::ravel(idx.data(), shape)];
  }
  return out;
}

// Signed axis permutation of the last three axes: out[z,y,x] = in[p(z,y,x)]
// with optional reversal per source axis. The 48 octahedral symmetries of a
// cube are exactly the (perm, flips) combinations.
template <typename T>
Tensor<T> signed_permute3(const Tensor<T>& t, const std::array<int, 3>& perm,
                          const std::array<bool, 3>& flips) {
  const int r = t.rank();
  if (r < 3) throw std::invalid_argument("signed_permute3: rank < 3");
  const int base = r - 3;
  const int64_t n = t.dim(base);
  if (t.dim(base + 1) != n || t.dim(base + 2) != n) {
    throw std::invalid_argument("signed_permute3: spatial extents differ");
  }
  Tensor<T> out(t.shape());
  const Shape& shape = t.shape();
  std::vector<int64_t> idx(static_cast<size_t>(r));
  std::array<int64_t, 3> s{};
  for (int64_t f = 0; f < t.numel(); ++f) {
    detail::unravel(f, shape, idx.data());
    for (int a = 0; a < 3; ++a) {
      int64_t v = idx[static_cast<size_t>(base + perm[static_cast<size_t>(a)])];
      if (flips[static_cast<size_t>(a)]) v = n - 1 - v;
      s[static_cast<size_t>(a)] = v;
    }
    for (int a = 0; a < 3; ++a) idx[static_cast<size_t>(base + a)] = s[static_cast<size_t>(a)];
    out[detail::ravel(idx.data(), shape)] = t[f];
  }
  return out;
}

// All 48 signed axis permutations of the cube.
inline std::vector<std::pair<std::array<int, 3>, std::array<bool, 3>>>
cube_symmetries() {
  std::vector<std::pair<std::array<int, 3>, std::array<bool, 3>>> out;
  std::array<int, 3> perm{0, 1, 2};
  std::sort(perm.begin(), perm.end());
  do {
    for (int mask = 0; mask < 8; ++mask) {
      out.push_back({perm, {(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0}});
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

// Bilinear rotation of the last two axes about the pixel-center
// ((H-1)/2, (W-1)/2), counter-clockwise for positive angles so that 90
// degrees lands on rot90 for square planes. Samples outside the frame read
// `fill`.
template <typename T>
Tensor<T> rotate_bilinear(const Tensor<T>& t, double angle_degrees, T fill = T{0}) {
  if (t.rank() < 2) throw std::invalid_argument("rotate_bilinear: rank < 2");
  if (angle_degrees == 0.0) return t;
  const int64_t h = t.dim(t.rank() - 2);
  const int64_t w = t.dim(t.rank() - 1);
  const int64_t planes = t.numel() / (h * w);
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  const double rad = angle_degrees * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);

  Tensor<T> out(t.shape());
  for (int64_t p = 0; p < planes; ++p) {
    const T* in = t.data() + p * h * w;
    T* dst = out.data() + p * h * w;
    for (int64_t y = 0; y < h; ++y) {
      const double vy = static_cast<double>(y) - cy;
      for (int64_t x = 0; x < w; ++x) {
        const double vx = static_cast<double>(x) - cx;
        const double sx = vx * c - vy * s + cx;
        const double sy = vx * s + vy * c + cy;
        const double fy = std::floor(sy), fx = std::floor(sx);
        const int64_t y0 = static_cast<int64_t>(fy), x0 = static_cast<int64_t>(fx);
        const double ay = sy - fy, ax = sx - fx;
        auto tap = [&](int64_t yy, int64_t xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return static_cast<double>(fill);
          return static_cast<double>(in[yy * w + xx]);
        };
        const double v = (1.0 - ay) * ((1.0 - ax) * tap(y0, x0) + ax * tap(y0, x0 + 1)) +
                         ay * ((1.0 - ax) * tap(y0 + 1, x0) + ax * tap(y0 + 1, x0 + 1));
        dst[y * w + x] = static_cast<T>(v);
      }
    }
  }
  return out;
}

// Non-overlapping mean pooling over the last `spatial_dims` axes. Extents must
// divide by the window (pad-free contract).
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& t, int window, int spatial_dims = 2) {
  if (window < 1) throw std::invalid_argument("avg_pool: window < 1");
  if (spatial_dims < 1 || spatial_dims > 3 || t.rank() < spatial_dims) {
    throw std::invalid_argument("avg_pool: bad spatial_dims");
  }
  const int base = t.rank() - spatial_dims;
  Shape out_shape = t.shape();
  int64_t block = 1;
  for (int a = base; a < t.rank(); ++a) {
    if (t.dim(a) % window != 0) {
      throw std::invalid_argument("avg_pool: extent not divisible by window");
    }
    out_shape[static_cast<size_t>(a)] = t.dim(a) / window;
    block *= window;
  }
  Tensor<T> out(out_shape);
  const Shape& in_shape = t.shape();
  std::vector<int64_t> oidx(static_cast<size_t>(t.rank()));
  std::vector<int64_t> iidx(static_cast<size_t>(t.rank()));
  const double inv = 1.0 / static_cast<double>(block);
  for (int64_t f = 0; f < out.numel(); ++f) {
    detail::unravel(f, out_shape, oidx.data());
    for (int a = 0; a < base; ++a) iidx[static_cast<size_t>(a)] = oidx[static_cast<size_t>(a)];
    double acc = 0.0;
    for (int64_t b = 0; b < block; ++b) {
      int64_t rem = b;
      for (int a = t.rank() - 1; a >= base; --a) {
        const int64_t off = rem % window;
        rem /= window;
        iidx[static_cast<size_t>(a)] = oidx[static_cast<size_t>(a)] * window + off;
      }
      acc += static_cast<double>(t[detail::ravel(iidx.data(), in_shape)]);
    }
    out[f] = static_cast<T>(acc * inv);
  }
  return out;
}

// Zero every position of the last two axes farther than `radius` from the
// pixel-center. Used to cut rotation fill and convolution borders out of
// equivariance measurements.
template <typename T>
Tensor<T> central_disk_mask(const Tensor<T>& t, double radius) {
  if (t.rank() < 2) throw std::invalid_argument("central_disk_mask: rank < 2");
  const int64_t h = t.dim(t.rank() - 2);
  const int64_t w = t.dim(t.rank() - 1);
  const int64_t planes = t.numel() / (h * w);
  const double cy = 0.5 * static_cast<double>(h - 1);
  const double cx = 0.5 * static_cast<double>(w - 1);
  const double r2 = radius * radius;
  Tensor<T> out = t;
  for (int64_t p = 0; p < planes; ++p) {
    T* dst = out.data() + p * h * w;
    for (int64_t y = 0; y < h; ++y) {
      const double dy = static_cast<double>(y) - cy;
      for (int64_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx;
        if (dy * dy + dx * dx > r2) dst[y * w + x] = T{0};
      }
    }
  }
  return out;
}

// ||a - b||_2 / max(||b||_2, 1e-12)
template <typename T>
double rel_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("rel_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    num += d * d;
    den += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
double mean(const Tensor<T>& t) {
  double acc = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += static_cast<double>(t[i]);
  return acc / static_cast<double>(t.numel());
}

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

}  // namespace gmr
