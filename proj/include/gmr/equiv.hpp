#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmr/conv.hpp"
#include "gmr/kernel.hpp"
#include "gmr/tensor.hpp"

namespace gmr {

using OpFn = std::function<Tensor<double>(const Tensor<double>&)>;

// Random test fields for the sweeps. White noise has no stable bilinear
// round trip, so inputs are noise smoothed by `smoothing` passes of a 3x3
// box blur; the floor column makes the remaining interpolation error
// explicit either way.
struct InputSpec {
  int64_t channels = 3;
  int64_t height = 64;
  int64_t width = 64;
  int smoothing = 2;
};

Tensor<double> make_input(const InputSpec& spec, uint64_t seed);

// Relative commutation error of `op` under rotation by `angle`:
//   E = rel_error(rotate(-angle) . op . rotate(angle) (x), op(x))
// evaluated on the central disk of radius min(H, W)/2 - mask_margin.
double rotation_commutation_error(const OpFn& op, const Tensor<double>& x,
                                  double angle_degrees, double mask_margin);

// Per-angle sweep; means and stds over `trials` random inputs per angle with
// per-cell seeds seed ^ angle-index ^ trial-index, plus the identity
// operator's error on the same inputs (the interpolation floor).
struct EquivarianceReport {
  std::vector<double> angle_degrees;
  std::vector<double> mean_error;
  std::vector<double> std_error;
  std::vector<double> floor_error;
  int trials = 0;
  uint64_t seed = 0;
};

EquivarianceReport angle_sweep(const OpFn& op, const InputSpec& spec,
                               double mask_margin,
                               const std::vector<double>& angles, int trials,
                               uint64_t seed);

std::vector<double> default_angles();  // 0..350 step 10

// Max over trials of the rot90/flip commutation errors of a GMR layer
// (2D: 3 rotations + 2 flips; 3D: all 48 signed axis permutations).
double check_exact_symmetry(const GmrLayerParams& p, const ConvConfig& cfg,
                            int trials, uint64_t seed, int64_t spatial = 0);

// Max flip-commutation error over both spatial axes.
double reflection_check(const OpFn& op, const InputSpec& spec, uint64_t seed,
                        int trials = 10);

void write_report_csv(const EquivarianceReport& r, std::ostream& out);
void write_report_json(const EquivarianceReport& r, std::ostream& out);

}  // namespace gmr
