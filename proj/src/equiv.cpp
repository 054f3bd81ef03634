#include "gmr/equiv.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gmr/rng.hpp"

namespace gmr {

namespace {

Tensor<double> box_blur3(const Tensor<double>& t) {
  const int64_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  const int64_t planes = t.numel() / (h * w);
  Tensor<double> out(t.shape());
  for (int64_t p = 0; p < planes; ++p) {
    const double* src = t.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        int count = 0;
        for (int64_t dy = -1; dy <= 1; ++dy) {
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += src[yy * w + xx];
            ++count;
          }
        }
        dst[y * w + x] = acc / count;
      }
    }
  }
  return out;
}

}  // namespace

Tensor<double> make_input(const InputSpec& spec, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> x =
      random_normal<double>(Shape{1, spec.channels, spec.height, spec.width}, rng);
  for (int i = 0; i < spec.smoothing; ++i) x = box_blur3(x);
  return x;
}

double rotation_commutation_error(const OpFn& op, const Tensor<double>& x,
                                  double angle_degrees, double mask_margin) {
  const int64_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const double radius = 0.5 * static_cast<double>(std::min(h, w)) - mask_margin;
  const Tensor<double> reference = op(x);
  const Tensor<double> routed =
      rotate_bilinear(op(rotate_bilinear(x, angle_degrees)), -angle_degrees);
  return rel_error(central_disk_mask(routed, radius),
                   central_disk_mask(reference, radius));
}

std::vector<double> default_angles() {
  std::vector<double> a;
  for (int d = 0; d < 360; d += 10) a.push_back(static_cast<double>(d));
  return a;
}

EquivarianceReport angle_sweep(const OpFn& op, const InputSpec& spec,
                               double mask_margin,
                               const std::vector<double>& angles, int trials,
                               uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("angle_sweep: trials must be >= 1");
  for (double a : angles) {
    if (!std::isfinite(a)) throw std::invalid_argument("angle_sweep: non-finite angle");
  }
  const OpFn identity = [](const Tensor<double>& t) { return t; };
  EquivarianceReport r;
  r.trials = trials;
  r.seed = seed;
  for (size_t ai = 0; ai < angles.size(); ++ai) {
    const double angle = angles[ai];
    double sum = 0.0, sum2 = 0.0, floor_sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      const uint64_t cell_seed =
          seed ^ (0x9e3779b97f4a7c15ULL * (ai + 1)) ^ (0xbf58476d1ce4e5b9ULL * (trial + 1));
      const Tensor<double> x = make_input(spec, cell_seed);
      const double e = rotation_commutation_error(op, x, angle, mask_margin);
      sum += e;
      sum2 += e * e;
      floor_sum += rotation_commutation_error(identity, x, angle, mask_margin);
    }
    const double m = sum / trials;
    r.angle_degrees.push_back(angle);
    r.mean_error.push_back(m);
    r.std_error.push_back(std::sqrt(std::max(0.0, sum2 / trials - m * m)));
    r.floor_error.push_back(floor_sum / trials);
  }
  return r;
}

double check_exact_symmetry(const GmrLayerParams& p, const ConvConfig& cfg,
                            int trials, uint64_t seed, int64_t spatial) {
  const int k = p.geometry.k;
  if (spatial <= 0) spatial = std::max<int64_t>(2 * k, 12);
  const GaussianRingBasis basis = build_basis(p.geometry, p.sigma);
  const Tensor<double> basis_t = basis.as_tensor();
  const Tensor<double> weights(Shape{p.weights.c_out, p.weights.c_in, p.weights.n},
                               p.weights.w);
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    if (p.geometry.dims == 2) {
      const Tensor<double> x = random_normal<double>(
          Shape{1, p.weights.c_in, spatial, spatial}, rng);
      const Tensor<double> fx = gmr_conv(x, basis_t, weights, cfg);
      for (int q = 1; q < 4; ++q) {
        worst = std::max(worst,
                         rel_error(gmr_conv(rot90(x, q), basis_t, weights, cfg), rot90(fx, q)));
      }
      for (int axis : {2, 3}) {
        worst = std::max(worst,
                         rel_error(gmr_conv(flip(x, axis), basis_t, weights, cfg), flip(fx, axis)));
      }
    } else {
      const Tensor<double> x = random_normal<double>(
          Shape{1, p.weights.c_in, spatial, spatial, spatial}, rng);
      const Tensor<double> fx = gmr_conv(x, basis_t, weights, cfg);
      for (const auto& [perm, flips] : cube_symmetries()) {
        const Tensor<double> gx = signed_permute3(x, perm, flips);
        worst = std::max(
            worst, rel_error(gmr_conv(gx, basis_t, weights, cfg), signed_permute3(fx, perm, flips)));
      }
    }
  }
  return worst;
}

double reflection_check(const OpFn& op, const InputSpec& spec, uint64_t seed,
                        int trials) {
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const Tensor<double> x = make_input(spec, seed ^ (0xd1342543de82ef95ULL * (trial + 1)));
    const Tensor<double> fx = op(x);
    for (int axis = x.rank() - 2; axis < x.rank(); ++axis) {
      worst = std::max(worst, rel_error(op(flip(x, axis)), flip(fx, axis)));
    }
  }
  return worst;
}

void write_report_csv(const EquivarianceReport& r, std::ostream& out) {
  out << "# gmr equivariance report v1, trials=" << r.trials << ", seed=" << r.seed
      << "\n";
  out << "angle,mean_error,std_error,floor_error\n";
  out.precision(12);
  for (size_t i = 0; i < r.angle_degrees.size(); ++i) {
    out << r.angle_degrees[i] << "," << r.mean_error[i] << "," << r.std_error[i]
        << "," << r.floor_error[i] << "\n";
  }
}

void write_report_json(const EquivarianceReport& r, std::ostream& out) {
  out.precision(12);
  out << "{\"schema\":\"gmr.equiv_report/1\",\"trials\":" << r.trials
      << ",\"seed\":" << r.seed << ",\"rows\":[";
  for (size_t i = 0; i < r.angle_degrees.size(); ++i) {
    if (i) out << ",";
    out << "{\"angle\":" << r.angle_degrees[i] << ",\"mean_error\":" << r.mean_error[i]
        << ",\"std_error\":" << r.std_error[i] << ",\"floor_error\":" << r.floor_error[i]
        << "}";
  }
  out << "]}\n";
}

}  // namespace gmr
