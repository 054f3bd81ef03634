#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gmr/conv.hpp"
#include "gmr/kernel.hpp"
#include "gmr/tensor.hpp"

namespace gmr {

// Network building blocks. Downsampling happens only through kAvgPoolDown
// (pool with size and stride `window`, then a stride-1 1x1 mix); convolutions
// are stride 1 by construction and validation rejects anything else.
enum class LayerKind {
  kGmrConv,
  kDenseConv,
  kBias,
  kRelu,
  kAvgPoolDown,
  kGlobalAvgPool,
  kLinear,
};

struct LayerSpec {
  LayerKind kind{};
  int k = 0;
  int n = 0;
  int c_in = 0;
  int c_out = 0;
  int window = 0;
  int stride = 1;
  int channels = 0;  // kBias
};

struct LayerParams {
  GmrLayerParams gmr;        // kGmrConv
  Tensor<double> dense;      // kDenseConv kernel; kAvgPoolDown 1x1 mix kernel
  std::vector<double> bias;  // kBias; kLinear bias
  Tensor<double> lin_w;      // kLinear (classes, c_in)
};

struct Network {
  std::vector<LayerSpec> specs;
  std::vector<LayerParams> params;
  int input_channels = 1;
  int classes = 0;

  int64_t parameter_total() const;
};

// Rejects stride > 1 convolutions, broken channel chains, and any layer
// ordering that would reshape spatial dimensions other than by pooling.
void validate_network(const Network& net);

struct TwinNetworks {
  Network gmr_net;
  Network dense_net;
};

// Identical topologies (conv k=9 -> relu -> two window-2 pool-downsamples ->
// conv k=5 -> relu -> global average pool -> linear head) differing only in
// the convolution kind; the dense twin uses its conventional k=3.
TwinNetworks build_twin_networks(int base_channels, uint64_t seed,
                                 int classes = 4, int input_channels = 1);

struct ForwardTrace {
  std::vector<Tensor<double>> inputs;  // input to each layer
  std::vector<Tensor<double>> pooled;  // kAvgPoolDown intermediate
};

Tensor<double> net_forward(const Network& net, const Tensor<double>& x,
                           ForwardTrace* trace = nullptr, int threads = 1);

struct NetworkGrads {
  std::vector<LayerParams> layers;
};

NetworkGrads make_zero_grads(const Network& net);

// Accumulates parameter gradients into `grads` and returns the input gradient.
Tensor<double> net_backward(const Network& net, const ForwardTrace& trace,
                            const Tensor<double>& grad_logits,
                            NetworkGrads& grads, int threads = 1);

struct LossResult {
  double loss = 0.0;
  Tensor<double> grad_logits;
};

LossResult softmax_cross_entropy(const Tensor<double>& logits,
                                 const std::vector<int32_t>& labels);

// Rotation-invariant-by-construction classification task: class m renders
// m+1 concentric Gaussian rings around a common random center near the image
// center, with randomized radii, widths, and amplitudes, plus pixel noise.
// Any rotation or reflection of an image keeps its label valid.
struct SyntheticDatasetSpec {
  int image_size = 48;
  int classes = 4;
  int train_per_class = 500;
  int test_per_class = 200;
  double noise_std = 0.1;
  double ring_width_lo = 0.9;  // Gaussian ring profile sigma, pixels
  double ring_width_hi = 1.3;
  double spacing_lo = 2.8;  // radial gap between consecutive rings
  double spacing_hi = 3.6;
  double radius_lo = 2.5;  // innermost ring radius
  double radius_hi = 4.0;
  uint64_t seed = 1234;
};

struct Dataset {
  int64_t height = 0;
  int64_t width = 0;
  int classes = 0;
  Tensor<double> images;  // (count, 1, H, W)
  std::vector<int32_t> labels;

  int64_t count() const { return static_cast<int64_t>(labels.size()); }
};

Dataset make_synthetic_dataset(const SyntheticDatasetSpec& spec, bool train_split);

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double grad_clip = 5.0;  // global L2 norm cap; 0 disables
  int batch_size = 32;
  uint64_t seed = 7;
  int threads = 1;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

class TrainDivergence : public std::runtime_error {
 public:
  TrainDivergence(int64_t step_index, const std::string& what)
      : std::runtime_error(what), step(step_index) {}
  int64_t step;
};

// Plain momentum SGD on softmax cross-entropy; sigma is clipped after every
// step. Throws TrainDivergence when the loss stops being finite.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg);

double accuracy(const Network& net, const Dataset& data,
                double angle_degrees = 0.0, int threads = 1);

// Per-angle accuracy table; rotations use bilinear resampling with zero fill.
std::vector<std::pair<double, double>> evaluate(const Network& net,
                                                const Dataset& data,
                                                const std::vector<double>& angles,
                                                int threads = 1);

struct TrainDemoConfig {
  SyntheticDatasetSpec dataset;
  TrainConfig train;
  int base_channels = 8;
  std::vector<double> eval_angles;  // empty -> 0..330 step 30 plus 45
};

struct TrainDemoResult {
  TwinNetworks nets;
  TrainResult gmr_curve;
  TrainResult dense_curve;
  double gmr_train_acc = 0.0;
  double dense_train_acc = 0.0;
  std::vector<std::pair<double, double>> gmr_acc;
  std::vector<std::pair<double, double>> dense_acc;
};

std::vector<double> default_eval_angles();

TrainDemoResult run_train_demo(const TrainDemoConfig& cfg);

}  // namespace gmr
