#include "gmr/net.hpp"

#include <algorithm>
#include <cmath>

#include "gmr/blas.hpp"
#include "gmr/rng.hpp"

namespace gmr {

namespace {

ConvConfig conv_cfg(const LayerSpec& spec) {
  ConvConfig cfg = ConvConfig::same(spec.k);
  cfg.stride = spec.stride;
  return cfg;
}

void add_channel_bias(Tensor<double>& t, const std::vector<double>& bias) {
  const int64_t c = t.dim(1);
  const int64_t plane = t.numel() / (t.dim(0) * c);
  for (int64_t b = 0; b < t.dim(0); ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double* p = t.data() + (b * c + ch) * plane;
      const double v = bias[static_cast<size_t>(ch)];
      for (int64_t i = 0; i < plane; ++i) p[i] += v;
    }
  }
}

Tensor<double> global_avg_pool(const Tensor<double>& t) {
  const int64_t b_n = t.dim(0), c = t.dim(1);
  const int64_t plane = t.numel() / (b_n * c);
  Tensor<double> out(Shape{b_n, c});
  for (int64_t b = 0; b < b_n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const double* p = t.data() + (b * c + ch) * plane;
      double acc = 0.0;
      for (int64_t i = 0; i < plane; ++i) acc += p[i];
      out.at(b, ch) = acc / static_cast<double>(plane);
    }
  }
  return out;
}

Tensor<double> dense_init(int c_out, int c_in, int k, Rng& rng) {
  Tensor<double> w(Shape{c_out, c_in, k, k});
  const double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, stddev);
  return w;
}

}  // namespace

int64_t Network::parameter_total() const {
  int64_t total = 0;
  for (const auto& p : params) {
    total += static_cast<int64_t>(p.gmr.weights.w.size());
    total += static_cast<int64_t>(p.gmr.sigma.log_sigma.size());
    total += p.dense.numel();
    total += static_cast<int64_t>(p.bias.size());
    total += p.lin_w.numel();
  }
  return total;
}

void validate_network(const Network& net) {
  if (net.specs.size() != net.params.size()) {
    throw std::invalid_argument("network: spec/param count mismatch");
  }
  int channels = net.input_channels;
  bool spatial_collapsed = false;
  for (const auto& spec : net.specs) {
    switch (spec.kind) {
      case LayerKind::kGmrConv:
      case LayerKind::kDenseConv:
        if (spec.stride != 1) {
          throw std::invalid_argument(
              "network: convolution stride must be 1 (downsample with pooling)");
        }
        if (spatial_collapsed) throw std::invalid_argument("network: conv after pooling head");
        if (spec.c_in != channels) throw std::invalid_argument("network: channel chain broken");
        channels = spec.c_out;
        break;
      case LayerKind::kAvgPoolDown:
        if (spec.window < 2) throw std::invalid_argument("network: pool window must be >= 2");
        if (spatial_collapsed) throw std::invalid_argument("network: pool after pooling head");
        if (spec.c_in != channels) throw std::invalid_argument("network: channel chain broken");
        channels = spec.c_out;
        break;
      case LayerKind::kBias:
        if (spec.channels != channels) throw std::invalid_argument("network: bias width mismatch");
        break;
      case LayerKind::kRelu:
        break;
      case LayerKind::kGlobalAvgPool:
        spatial_collapsed = true;
        break;
      case LayerKind::kLinear:
        if (!spatial_collapsed) {
          throw std::invalid_argument("network: linear head before global pooling");
        }
        if (spec.c_in != channels) throw std::invalid_argument("network: channel chain broken");
        channels = spec.c_out;
        break;
    }
  }
  if (channels != net.classes) throw std::invalid_argument("network: head width != classes");
}

TwinNetworks build_twin_networks(int base_channels, uint64_t seed, int classes,
                                 int input_channels) {
  if (base_channels < 1) throw std::invalid_argument("build_twin_networks: bad channel count");
  const int c = base_channels;
  Rng rng(seed);
  const uint64_t conv1_seed = rng.next();
  const uint64_t mix1_seed = rng.next();
  const uint64_t mix2_seed = rng.next();
  const uint64_t conv2_seed = rng.next();
  const uint64_t head_seed = rng.next();

  auto build = [&](bool use_gmr) {
    Network net;
    net.input_channels = input_channels;
    net.classes = classes;
    Rng head_rng(head_seed);

    auto push = [&net](LayerSpec spec, LayerParams params) {
      net.specs.push_back(std::move(spec));
      net.params.push_back(std::move(params));
    };

    auto push_conv = [&](int k_gmr, int n, int k_dense, int c_in, int c_out,
                         uint64_t layer_seed) {
      LayerSpec spec;
      LayerParams p;
      if (use_gmr) {
        spec.kind = LayerKind::kGmrConv;
        spec.k = k_gmr;
        spec.n = n;
        p.gmr = make_layer_params(k_gmr, n, 2, c_in, c_out, layer_seed);
      } else {
        spec.kind = LayerKind::kDenseConv;
        spec.k = k_dense;
        Rng r(layer_seed);
        p.dense = dense_init(c_out, c_in, k_dense, r);
      }
      spec.c_in = c_in;
      spec.c_out = c_out;
      push(spec, std::move(p));
      LayerSpec bias_spec;
      bias_spec.kind = LayerKind::kBias;
      bias_spec.channels = c_out;
      LayerParams bias_p;
      bias_p.bias.assign(static_cast<size_t>(c_out), 0.0);
      push(bias_spec, std::move(bias_p));
    };

    auto push_pool_down = [&](int window, int c_in, int c_out, uint64_t layer_seed) {
      LayerSpec spec;
      spec.kind = LayerKind::kAvgPoolDown;
      spec.window = window;
      spec.c_in = c_in;
      spec.c_out = c_out;
      spec.k = 1;
      LayerParams p;
      Rng r(layer_seed);
      p.dense = dense_init(c_out, c_in, 1, r);
      push(spec, std::move(p));
      LayerSpec bias_spec;
      bias_spec.kind = LayerKind::kBias;
      bias_spec.channels = c_out;
      LayerParams bias_p;
      bias_p.bias.assign(static_cast<size_t>(c_out), 0.0);
      push(bias_spec, std::move(bias_p));
    };

    push_conv(9, 5, 3, input_channels, c, conv1_seed);
    push({LayerKind::kRelu}, {});
    push_pool_down(2, c, c, mix1_seed);
    push_pool_down(2, c, c, mix2_seed);
    push_conv(5, 3, 3, c, c, conv2_seed);
    push({LayerKind::kRelu}, {});
    push({LayerKind::kGlobalAvgPool}, {});

    LayerSpec head;
    head.kind = LayerKind::kLinear;
    head.c_in = c;
    head.c_out = classes;
    LayerParams head_p;
    head_p.lin_w = Tensor<double>(Shape{classes, c});
    const double head_std = std::sqrt(1.0 / c);
    for (int64_t i = 0; i < head_p.lin_w.numel(); ++i) {
      head_p.lin_w[i] = head_rng.normal(0.0, head_std);
    }
    head_p.bias.assign(static_cast<size_t>(classes), 0.0);
    push(head, std::move(head_p));

    validate_network(net);
    return net;
  };

  TwinNetworks twins;
  twins.gmr_net = build(true);
  twins.dense_net = build(false);
  return twins;
}

Tensor<double> net_forward(const Network& net, const Tensor<double>& x,
                           ForwardTrace* trace, int threads) {
  Tensor<double> cur = x;
  if (trace) {
    trace->inputs.clear();
    trace->pooled.assign(net.specs.size(), Tensor<double>{});
  }
  for (size_t li = 0; li < net.specs.size(); ++li) {
    const LayerSpec& spec = net.specs[li];
    const LayerParams& p = net.params[li];
    if (trace) trace->inputs.push_back(cur);
    switch (spec.kind) {
      case LayerKind::kGmrConv:
        cur = gmr_conv(cur, p.gmr, conv_cfg(spec), threads);
        break;
      case LayerKind::kDenseConv:
        cur = conv_direct(cur, p.dense, conv_cfg(spec), threads);
        break;
      case LayerKind::kBias:
        add_channel_bias(cur, p.bias);
        break;
      case LayerKind::kRelu:
        for (int64_t i = 0; i < cur.numel(); ++i) cur[i] = std::max(0.0, cur[i]);
        break;
      case LayerKind::kAvgPoolDown: {
        Tensor<double> pooled = avg_pool(cur, spec.window, 2);
        if (trace) trace->pooled[li] = pooled;
        ConvConfig cfg;
        cfg.padding = {0, 0};
        cur = conv_direct(pooled, p.dense, cfg, threads);
        break;
      }
      case LayerKind::kGlobalAvgPool:
        cur = global_avg_pool(cur);
        break;
      case LayerKind::kLinear: {
        const int64_t b_n = cur.dim(0), c_in = cur.dim(1);
        const int64_t c_out = p.lin_w.dim(0);
        Tensor<double> out(Shape{b_n, c_out});
        gemm<double>(false, true, b_n, c_out, c_in, 1.0, cur.data(), c_in,
                     p.lin_w.data(), c_in, 0.0, out.data(), c_out);
        for (int64_t b = 0; b < b_n; ++b) {
          for (int64_t o = 0; o < c_out; ++o) out.at(b, o) += p.bias[static_cast<size_t>(o)];
        }
        cur = std::move(out);
        break;
      }
    }
  }
  return cur;
}

NetworkGrads make_zero_grads(const Network& net) {
  NetworkGrads g;
  g.layers.reserve(net.params.size());
  for (const auto& p : net.params) {
    LayerParams z;
    if (!p.gmr.weights.w.empty()) {
      z.gmr = p.gmr;
      std::fill(z.gmr.weights.w.begin(), z.gmr.weights.w.end(), 0.0);
      std::fill(z.gmr.sigma.log_sigma.begin(), z.gmr.sigma.log_sigma.end(), 0.0);
    }
    if (!p.dense.empty()) z.dense = Tensor<double>(p.dense.shape());
    if (!p.bias.empty()) z.bias.assign(p.bias.size(), 0.0);
    if (!p.lin_w.empty()) z.lin_w = Tensor<double>(p.lin_w.shape());
    g.layers.push_back(std::move(z));
  }
  return g;
}

Tensor<double> net_backward(const Network& net, const ForwardTrace& trace,
                            const Tensor<double>& grad_logits,
                            NetworkGrads& grads, int threads) {
  Tensor<double> grad = grad_logits;
  for (size_t li = net.specs.size(); li-- > 0;) {
    const LayerSpec& spec = net.specs[li];
    const LayerParams& p = net.params[li];
    LayerParams& g = grads.layers[li];
    const Tensor<double>& input = trace.inputs[li];
    switch (spec.kind) {
      case LayerKind::kGmrConv: {
        GmrGrads gg = gmr_conv_backward(input, p.gmr, conv_cfg(spec), grad, threads);
        for (size_t i = 0; i < gg.weights.w.size(); ++i) g.gmr.weights.w[i] += gg.weights.w[i];
        for (size_t i = 0; i < gg.log_sigma.size(); ++i) g.gmr.sigma.log_sigma[i] += gg.log_sigma[i];
        grad = std::move(gg.input);
        break;
      }
      case LayerKind::kDenseConv: {
        DenseConvGrads dg = conv_direct_backward(input, p.dense, conv_cfg(spec), grad, threads);
        for (int64_t i = 0; i < dg.kernel.numel(); ++i) g.dense[i] += dg.kernel[i];
        grad = std::move(dg.input);
        break;
      }
      case LayerKind::kBias: {
        const int64_t b_n = grad.dim(0), c = grad.dim(1);
        const int64_t plane = grad.numel() / (b_n * c);
        for (int64_t b = 0; b < b_n; ++b) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const double* gp = grad.data() + (b * c + ch) * plane;
            double acc = 0.0;
            for (int64_t i = 0; i < plane; ++i) acc += gp[i];
            g.bias[static_cast<size_t>(ch)] += acc;
          }
        }
        break;  // gradient passes through unchanged
      }
      case LayerKind::kRelu: {
        Tensor<double> masked(grad.shape());
        for (int64_t i = 0; i < grad.numel(); ++i) {
          masked[i] = input[i] > 0.0 ? grad[i] : 0.0;
        }
        grad = std::move(masked);
        break;
      }
      case LayerKind::kAvgPoolDown: {
        const Tensor<double>& pooled = trace.pooled[li];
        ConvConfig cfg;
        cfg.padding = {0, 0};
        DenseConvGrads dg = conv_direct_backward(pooled, p.dense, cfg, grad, threads);
        for (int64_t i = 0; i < dg.kernel.numel(); ++i) g.dense[i] += dg.kernel[i];
        // distribute the pooled gradient evenly over each window
        const int w = spec.window;
        const double inv = 1.0 / (w * w);
        Tensor<double> up(input.shape());
        const int64_t b_n = input.dim(0), c = input.dim(1);
        const int64_t h = input.dim(2), wd = input.dim(3);
        for (int64_t b = 0; b < b_n; ++b) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const double* gp = dg.input.data() + (b * c + ch) * (h / w) * (wd / w);
            double* dst = up.data() + (b * c + ch) * h * wd;
            for (int64_t y = 0; y < h; ++y) {
              for (int64_t x = 0; x < wd; ++x) {
                dst[y * wd + x] = gp[(y / w) * (wd / w) + (x / w)] * inv;
              }
            }
          }
        }
        grad = std::move(up);
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        const int64_t b_n = input.dim(0), c = input.dim(1);
        const int64_t plane = input.numel() / (b_n * c);
        const double inv = 1.0 / static_cast<double>(plane);
        Tensor<double> up(input.shape());
        for (int64_t b = 0; b < b_n; ++b) {
          for (int64_t ch = 0; ch < c; ++ch) {
            const double v = grad.at(b, ch) * inv;
            double* dst = up.data() + (b * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = v;
          }
        }
        grad = std::move(up);
        break;
      }
      case LayerKind::kLinear: {
        const int64_t b_n = input.dim(0), c_in = input.dim(1);
        const int64_t c_out = p.lin_w.dim(0);
        // dW += grad^T . input ; db += column sums ; dx = grad . W
        gemm<double>(true, false, c_out, c_in, b_n, 1.0, grad.data(), c_out,
                     input.data(), c_in, 1.0, g.lin_w.data(), c_in);
        for (int64_t b = 0; b < b_n; ++b) {
          for (int64_t o = 0; o < c_out; ++o) g.bias[static_cast<size_t>(o)] += grad.at(b, o);
        }
        Tensor<double> dx(Shape{b_n, c_in});
        gemm<double>(false, false, b_n, c_in, c_out, 1.0, grad.data(), c_out,
                     p.lin_w.data(), c_in, 0.0, dx.data(), c_in);
        grad = std::move(dx);
        break;
      }
    }
  }
  return grad;
}

LossResult softmax_cross_entropy(const Tensor<double>& logits,
                                 const std::vector<int32_t>& labels) {
  const int64_t b_n = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != b_n) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  LossResult r;
  r.grad_logits = Tensor<double>(logits.shape());
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b_n);
  for (int64_t b = 0; b < b_n; ++b) {
    const double* row = logits.data() + b * classes;
    double mx = row[0];
    for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const int32_t label = labels[static_cast<size_t>(b)];
    total += -(row[label] - mx - std::log(z));
    for (int64_t c = 0; c < classes; ++c) {
      const double prob = std::exp(row[c] - mx) / z;
      r.grad_logits.at(b, c) = (prob - (c == label ? 1.0 : 0.0)) * inv_b;
    }
  }
  r.loss = total * inv_b;
  return r;
}

Dataset make_synthetic_dataset(const SyntheticDatasetSpec& spec, bool train_split) {
  const int64_t size = spec.image_size;
  const int64_t per_class = train_split ? spec.train_per_class : spec.test_per_class;
  const int64_t count = per_class * spec.classes;
  Rng rng(spec.seed ^ (train_split ? 0x7261696e00ULL : 0x7465737400ULL));

  Dataset d;
  d.height = size;
  d.width = size;
  d.classes = spec.classes;
  d.images = Tensor<double>(Shape{count, 1, size, size});
  d.labels.resize(static_cast<size_t>(count));

  const double grid_center = 0.5 * static_cast<double>(size - 1);
  int64_t idx = 0;
  for (int64_t s = 0; s < per_class; ++s) {
    for (int cls = 0; cls < spec.classes; ++cls, ++idx) {
      d.labels[static_cast<size_t>(idx)] = cls;
      // ring center offset stays small so every ring survives test rotation
      const double off_r = 3.0 * std::sqrt(rng.uniform());
      const double off_a = rng.uniform(0.0, 2.0 * M_PI);
      const double cy = grid_center + off_r * std::sin(off_a);
      const double cx = grid_center + off_r * std::cos(off_a);
      const double r0 = rng.uniform(spec.radius_lo, spec.radius_hi);
      const double dr = rng.uniform(spec.spacing_lo, spec.spacing_hi);
      const double width = rng.uniform(spec.ring_width_lo, spec.ring_width_hi);
      double* img = d.images.data() + idx * size * size;
      const int rings = cls + 1;
      std::vector<double> amp(static_cast<size_t>(rings));
      for (double& a : amp) a = rng.uniform(0.7, 1.3);
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          const double rr = std::hypot(static_cast<double>(y) - cy,
                                       static_cast<double>(x) - cx);
          double v = 0.0;
          for (int j = 0; j < rings; ++j) {
            const double rho = r0 + j * dr;
            v += amp[static_cast<size_t>(j)] *
                 std::exp(-(rr - rho) * (rr - rho) / (2.0 * width * width));
          }
          img[y * size + x] = v + rng.normal(0.0, spec.noise_std);
        }
      }
    }
  }
  return d;
}

namespace {

double grad_norm(const NetworkGrads& grads) {
  double acc = 0.0;
  for (const auto& g : grads.layers) {
    for (double v : g.gmr.weights.w) acc += v * v;
    for (double v : g.gmr.sigma.log_sigma) acc += v * v;
    for (int64_t i = 0; i < g.dense.numel(); ++i) acc += g.dense[i] * g.dense[i];
    for (double v : g.bias) acc += v * v;
    for (int64_t i = 0; i < g.lin_w.numel(); ++i) acc += g.lin_w[i] * g.lin_w[i];
  }
  return std::sqrt(acc);
}

void scale_grads(NetworkGrads& grads, double scale) {
  for (auto& g : grads.layers) {
    for (double& v : g.gmr.weights.w) v *= scale;
    for (double& v : g.gmr.sigma.log_sigma) v *= scale;
    for (int64_t i = 0; i < g.dense.numel(); ++i) g.dense[i] *= scale;
    for (double& v : g.bias) v *= scale;
    for (int64_t i = 0; i < g.lin_w.numel(); ++i) g.lin_w[i] *= scale;
  }
}

void sgd_step(Network& net, const NetworkGrads& grads, NetworkGrads& momentum,
              double lr, double mu) {
  for (size_t li = 0; li < net.params.size(); ++li) {
    LayerParams& p = net.params[li];
    const LayerParams& g = grads.layers[li];
    LayerParams& v = momentum.layers[li];
    for (size_t i = 0; i < p.gmr.weights.w.size(); ++i) {
      v.gmr.weights.w[i] = mu * v.gmr.weights.w[i] + g.gmr.weights.w[i];
      p.gmr.weights.w[i] -= lr * v.gmr.weights.w[i];
    }
    for (size_t i = 0; i < p.gmr.sigma.log_sigma.size(); ++i) {
      v.gmr.sigma.log_sigma[i] = mu * v.gmr.sigma.log_sigma[i] + g.gmr.sigma.log_sigma[i];
      p.gmr.sigma.log_sigma[i] -= lr * v.gmr.sigma.log_sigma[i];
    }
    if (!p.gmr.sigma.log_sigma.empty()) {
      p.gmr.sigma = clip_sigma(p.gmr.sigma, p.gmr.geometry);
    }
    for (int64_t i = 0; i < p.dense.numel(); ++i) {
      v.dense[i] = mu * v.dense[i] + g.dense[i];
      p.dense[i] -= lr * v.dense[i];
    }
    for (size_t i = 0; i < p.bias.size(); ++i) {
      v.bias[i] = mu * v.bias[i] + g.bias[i];
      p.bias[i] -= lr * v.bias[i];
    }
    for (int64_t i = 0; i < p.lin_w.numel(); ++i) {
      v.lin_w[i] = mu * v.lin_w[i] + g.lin_w[i];
      p.lin_w[i] -= lr * v.lin_w[i];
    }
  }
}

Tensor<double> gather_batch(const Dataset& data, const std::vector<int64_t>& order,
                            int64_t lo, int64_t hi, std::vector<int32_t>& labels) {
  const int64_t b_n = hi - lo;
  const int64_t plane = data.height * data.width;
  Tensor<double> batch(Shape{b_n, 1, data.height, data.width});
  labels.resize(static_cast<size_t>(b_n));
  for (int64_t i = 0; i < b_n; ++i) {
    const int64_t src = order[static_cast<size_t>(lo + i)];
    std::copy(data.images.data() + src * plane, data.images.data() + (src + 1) * plane,
              batch.data() + i * plane);
    labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
  }
  return batch;
}

}  // namespace

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg) {
  validate_network(net);
  NetworkGrads momentum = make_zero_grads(net);
  TrainResult result;
  std::vector<int64_t> order(static_cast<size_t>(data.count()));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed ^ (0xa0761d6478bd642fULL * (epoch + 1)));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.integer(static_cast<int64_t>(i)))]);
    }
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (int64_t lo = 0; lo < data.count(); lo += cfg.batch_size, ++step) {
      const int64_t hi = std::min<int64_t>(lo + cfg.batch_size, data.count());
      std::vector<int32_t> labels;
      Tensor<double> batch = gather_batch(data, order, lo, hi, labels);

      ForwardTrace trace;
      Tensor<double> logits = net_forward(net, batch, &trace, cfg.threads);
      LossResult loss = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) {
        throw TrainDivergence(step, "training diverged: non-finite loss at step " +
                                        std::to_string(step));
      }
      NetworkGrads grads = make_zero_grads(net);
      net_backward(net, trace, loss.grad_logits, grads, cfg.threads);
      if (cfg.grad_clip > 0.0) {
        const double norm = grad_norm(grads);
        if (norm > cfg.grad_clip) scale_grads(grads, cfg.grad_clip / norm);
      }
      if (cfg.learning_rate != 0.0) {
        sgd_step(net, grads, momentum, cfg.learning_rate, cfg.momentum);
        for (const auto& p : net.params) {
          for (double v : p.gmr.weights.w) {
            if (!std::isfinite(v)) {
              throw TrainDivergence(step, "training diverged: non-finite weight at step " +
                                              std::to_string(step));
            }
          }
        }
      }
      epoch_loss += loss.loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

double accuracy(const Network& net, const Dataset& data, double angle_degrees,
                int threads) {
  const int64_t chunk = 100;
  int64_t correct = 0;
  const int64_t plane = data.height * data.width;
  for (int64_t lo = 0; lo < data.count(); lo += chunk) {
    const int64_t hi = std::min(lo + chunk, data.count());
    Tensor<double> batch(Shape{hi - lo, 1, data.height, data.width});
    std::copy(data.images.data() + lo * plane, data.images.data() + hi * plane,
              batch.data());
    if (angle_degrees != 0.0) batch = rotate_bilinear(batch, angle_degrees);
    Tensor<double> logits = net_forward(net, batch, nullptr, threads);
    for (int64_t b = 0; b < hi - lo; ++b) {
      const double* row = logits.data() + b * net.classes;
      int best = 0;
      for (int c = 1; c < net.classes; ++c) {
        if (row[c] > row[best]) best = c;
      }
      if (best == data.labels[static_cast<size_t>(lo + b)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.count());
}

std::vector<std::pair<double, double>> evaluate(const Network& net,
                                                const Dataset& data,
                                                const std::vector<double>& angles,
                                                int threads) {
  std::vector<std::pair<double, double>> table;
  table.reserve(angles.size());
  for (double a : angles) table.emplace_back(a, accuracy(net, data, a, threads));
  return table;
}

std::vector<double> default_eval_angles() {
  std::vector<double> angles;
  for (int d = 0; d < 360; d += 30) angles.push_back(static_cast<double>(d));
  angles.push_back(45.0);
  return angles;
}

TrainDemoResult run_train_demo(const TrainDemoConfig& cfg) {
  const Dataset train_set = make_synthetic_dataset(cfg.dataset, true);
  const Dataset test_set = make_synthetic_dataset(cfg.dataset, false);
  TrainDemoResult r;
  r.nets = build_twin_networks(cfg.base_channels, cfg.train.seed, cfg.dataset.classes);

  r.gmr_curve = train(r.nets.gmr_net, train_set, cfg.train);
  r.dense_curve = train(r.nets.dense_net, train_set, cfg.train);
  r.gmr_train_acc = accuracy(r.nets.gmr_net, train_set, 0.0, cfg.train.threads);
  r.dense_train_acc = accuracy(r.nets.dense_net, train_set, 0.0, cfg.train.threads);

  const std::vector<double> angles =
      cfg.eval_angles.empty() ? default_eval_angles() : cfg.eval_angles;
  r.gmr_acc = evaluate(r.nets.gmr_net, test_set, angles, cfg.train.threads);
  r.dense_acc = evaluate(r.nets.dense_net, test_set, angles, cfg.train.threads);
  return r;
}

}  // namespace gmr
