// Acceptance suite: one line per criterion, [PASS]/[FAIL], exit code equal to
// the number of failed criteria. Run without arguments for the full suite;
// `--only 1,3,7` selects a subset; `--quick` shrinks the benchmark repeat
// count for local iteration (the shipped defaults are the binding ones).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gmr/bench.hpp"
#include "gmr/blas.hpp"
#include "gmr/conv.hpp"
#include "gmr/equiv.hpp"
#include "gmr/kernel.hpp"
#include "gmr/net.hpp"
#include "gmr/rng.hpp"
#include "gmr/serialize.hpp"
#include "gmr/tensor.hpp"

using namespace gmr;

namespace {

int g_bench_repeats = 1000;

void report(int number, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %d. %s: %s\n", ok ? "PASS" : "FAIL", number, name, detail.c_str());
  std::fflush(stdout);
}

// 1. two-stage evaluation vs direct convolution on the materialized kernel
bool criterion_decomposition() {
  Rng rng(101);
  double worst = 0.0;
  for (int k : {3, 5, 7, 9, 11}) {
    const int n = default_ring_count(k);
    for (int trial = 0; trial < 50; ++trial) {
      GmrLayerParams p = make_layer_params(k, n, 2, 8, 8, rng.next());
      for (double& ls : p.sigma.log_sigma) ls += rng.uniform(-0.2, 0.2);
      p.sigma = clip_sigma(p.sigma, p.geometry);
      TensorD x = random_normal<double>(Shape{2, 8, 16, 16}, rng);
      const ConvConfig cfg = ConvConfig::same(k);
      const double err = rel_error(
          gmr_conv(x, p, cfg),
          conv_direct(x, materialize_kernel(p, build_basis(p.geometry, p.sigma)), cfg));
      worst = std::max(worst, err);
    }
  }
  std::ostringstream d;
  d << "max rel err " << worst << " (tolerance 1e-10)";
  const bool ok = worst <= 1e-10;
  report(1, "decomposition equivalence", ok, d.str());
  return ok;
}

// 2. rot90/flip commutation in 2d; all 48 cube symmetries in 3d
bool criterion_exact_equivariance() {
  Rng rng(102);
  double worst2d = 0.0, worst3d = 0.0;
  for (int k : {3, 5, 9}) {
    GmrLayerParams p = make_layer_params(k, default_ring_count(k), 2, 3, 4, rng.next());
    worst2d = std::max(worst2d,
                       check_exact_symmetry(p, ConvConfig::same(k), 5, rng.next()));
  }
  for (int k : {3, 5}) {
    GmrLayerParams p = make_layer_params(k, default_ring_count(k), 3, 2, 2, rng.next());
    worst3d = std::max(worst3d,
                       check_exact_symmetry(p, ConvConfig::same(k, 3), 2, rng.next()));
  }
  std::ostringstream d;
  d << "max rel err 2d " << worst2d << ", 3d (48 symmetries) " << worst3d
    << " (tolerance 1e-10)";
  const bool ok = worst2d <= 1e-10 && worst3d <= 1e-10;
  report(2, "exact discrete equivariance", ok, d.str());
  return ok;
}

// 3. smoothed basis vs nearest-ring basis at 45 degrees, identical weights
bool criterion_smoothing_ablation() {
  const ConvConfig cfg = ConvConfig::same(9);
  int wins = 0;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    GmrLayerParams p = make_layer_params(9, 5, 2, 3, 3, 9000 + seed);
    const TensorD weights(Shape{3, 3, 5}, p.weights.w);
    const TensorD smooth_t = build_basis(p.geometry, p.sigma).as_tensor();
    const TensorD nearest_t = build_nearest_ring_basis(p.geometry).as_tensor();
    const OpFn smooth = [&](const TensorD& x) { return gmr_conv(x, smooth_t, weights, cfg); };
    const OpFn nearest = [&](const TensorD& x) { return gmr_conv(x, nearest_t, weights, cfg); };

    InputSpec spec;
    EquivarianceReport se = angle_sweep(smooth, spec, 9.0, {45.0}, 10, 7000 + seed);
    EquivarianceReport ne = angle_sweep(nearest, spec, 9.0, {45.0}, 10, 7000 + seed);
    if (se.mean_error[0] - se.floor_error[0] < ne.mean_error[0] - ne.floor_error[0]) {
      ++wins;
    }
  }
  std::ostringstream d;
  d << "gmr beats nearest-ring in " << wins << "/" << seeds
    << " seeded trials (needs >= 9)";
  const bool ok = wins >= 9;
  report(3, "smoothing ablation direction", ok, d.str());
  return ok;
}

// 4. reverse-mode gradients vs central finite differences
bool criterion_gradients() {
  Rng rng(104);
  GmrLayerParams p = make_layer_params(5, 3, 2, 2, 2, rng.next());
  const ConvConfig cfg = ConvConfig::same(5);
  TensorD x = random_normal<double>(Shape{1, 2, 8, 8}, rng);
  TensorD gout = random_normal<double>(Shape{1, 2, 8, 8}, rng);
  GmrGrads g = gmr_conv_backward(x, p, cfg, gout);

  auto loss = [&](const TensorD& in, const GmrLayerParams& params) {
    TensorD out = gmr_conv(in, params, cfg);
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += out[i] * gout[i];
    return acc;
  };
  const double h = 1e-4;
  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    TensorD up = x, dn = x;
    up[i] += h;
    dn[i] -= h;
    const double fd = (loss(up, p) - loss(dn, p)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.input[i]) / std::max(1.0, std::abs(fd)));
  }
  for (size_t i = 0; i < p.weights.w.size(); ++i) {
    GmrLayerParams up = p, dn = p;
    up.weights.w[i] += h;
    dn.weights.w[i] -= h;
    const double fd = (loss(x, up) - loss(x, dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.weights.w[i]) / std::max(1.0, std::abs(fd)));
  }
  for (size_t i = 0; i < p.sigma.log_sigma.size(); ++i) {
    GmrLayerParams up = p, dn = p;
    up.sigma.log_sigma[i] += h;
    dn.sigma.log_sigma[i] -= h;
    const double fd = (loss(x, up) - loss(x, dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.log_sigma[i]) / std::max(1.0, std::abs(fd)));
  }
  std::ostringstream d;
  d << "max rel deviation " << worst << " (tolerance 1e-5)";
  const bool ok = worst <= 1e-5;
  report(4, "gradient correctness", ok, d.str());
  return ok;
}

// 5. wall-clock ordering on the 2x128x64x64 workload plus the MAC ratio
bool criterion_efficiency() {
  bool ok = true;
  std::ostringstream d;
  for (int k : {7, 9, 11}) {
    BenchSpec spec;
    spec.k = k;
    spec.repeats = g_bench_repeats;
    spec.warmup = 3;
    spec.seed = 105;
    std::vector<BenchResult> res =
        run_bench(spec, {"direct_materialized_gmr", "efficient_gmr"});
    const double direct = res[0].total_seconds;
    const double efficient = res[1].total_seconds;
    ok = ok && efficient < direct;
    d << "k=" << k << " efficient " << efficient << " s vs direct " << direct << " s; ";
  }
  const OpCount oc = op_count(9, 5, 128, 128, {64, 64});
  d << "mac ratio k=9 " << oc.ratio() << " (needs <= 0.1)";
  ok = ok && oc.ratio() <= 0.1;
  report(5, "efficiency direction", ok, d.str());
  return ok;
}

// 6. exact parameter counts for the k=9, n=5, 64-channel layer
bool criterion_parameter_compression() {
  const ParameterCount pc = parameter_count(64, 64, ring_geometry(9, 5));
  const bool ok = pc.gmr == 20485 && pc.dense == 331776 &&
                  std::abs(pc.compression() - 16.19) <= 0.01;
  std::ostringstream d;
  d << "gmr " << pc.gmr << ", dense " << pc.dense << ", ratio " << pc.compression();
  report(6, "parameter compression", ok, d.str());
  return ok;
}

// 7. twin-network robustness gap on the synthetic task, shipped defaults
bool criterion_training_demo() {
  TrainDemoConfig cfg;  // shipped defaults
  const TrainDemoResult r = run_train_demo(cfg);

  auto at_angle = [](const std::vector<std::pair<double, double>>& table, double angle) {
    for (const auto& [a, acc] : table) {
      if (a == angle) return acc;
    }
    return -1.0;
  };
  const double gmr0 = at_angle(r.gmr_acc, 0.0);
  const double dense0 = at_angle(r.dense_acc, 0.0);
  const double dense45 = at_angle(r.dense_acc, 45.0);
  double gmr_min = 1.0;
  for (const auto& [a, acc] : r.gmr_acc) gmr_min = std::min(gmr_min, acc);

  const bool base_ok = gmr0 >= 0.90 && dense0 >= 0.90;
  const bool gmr_ok = gmr_min >= gmr0 - 0.05;
  const bool dense_ok = dense45 <= dense0 - 0.15;
  std::ostringstream d;
  d << "gmr acc0 " << gmr0 << " min " << gmr_min << "; dense acc0 " << dense0
    << " acc45 " << dense45 << " (needs both acc0>=0.90, gmr min>=acc0-0.05, "
    << "dense acc45<=acc0-0.15)";
  const bool ok = base_ok && gmr_ok && dense_ok;
  report(7, "training demo robustness gap", ok, d.str());
  return ok;
}

// 8. gmr twin logits are rot90/flip invariant at any parameter state
bool criterion_logit_invariance() {
  Rng rng(108);
  double worst = 0.0;
  for (uint64_t seed : {11ULL, 12ULL}) {
    TwinNetworks twins = build_twin_networks(8, seed);
    Network net = twins.gmr_net;

    auto probe = [&](const Network& state) {
      TensorD x = random_normal<double>(Shape{2, 1, 48, 48}, rng);
      TensorD base = net_forward(state, x);
      for (int q = 1; q < 4; ++q) {
        worst = std::max(worst, rel_error(net_forward(state, rot90(x, q)), base));
      }
      for (int axis : {2, 3}) {
        worst = std::max(worst, rel_error(net_forward(state, flip(x, axis)), base));
      }
    };
    probe(net);  // untrained state

    SyntheticDatasetSpec tiny;
    tiny.train_per_class = 8;
    tiny.seed = seed;
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = seed;
    train(net, make_synthetic_dataset(tiny, true), tc);
    probe(net);  // trained state
  }
  std::ostringstream d;
  d << "max logit rel change " << worst << " (tolerance 1e-8)";
  const bool ok = worst <= 1e-8;
  report(8, "logit invariance", ok, d.str());
  return ok;
}

// 9. lossless round trips and magic rejection
bool criterion_serialization() {
  bool ok = true;
  std::string detail = "round trips bitwise, bad magic rejected";
  const std::string kernel_path = "/tmp/gmr_acceptance_params.gmr";
  const std::string net_path = "/tmp/gmr_acceptance_net.bin";

  GmrLayerParams p = make_layer_params(9, 5, 2, 6, 4, 901);
  p.sigma.log_sigma[1] = -0.321;
  save_gmr(kernel_path, p);
  GmrLayerParams q = load_gmr(kernel_path);
  ok = ok &&
       std::memcmp(q.weights.w.data(), p.weights.w.data(),
                   sizeof(double) * p.weights.w.size()) == 0 &&
       std::memcmp(q.sigma.log_sigma.data(), p.sigma.log_sigma.data(),
                   sizeof(double) * p.sigma.log_sigma.size()) == 0;

  TwinNetworks twins = build_twin_networks(6, 902);
  save_network(net_path, twins.gmr_net);
  Network loaded = load_network(net_path);
  for (size_t li = 0; li < loaded.params.size() && ok; ++li) {
    ok = ok && loaded.params[li].gmr.weights.w == twins.gmr_net.params[li].gmr.weights.w &&
         loaded.params[li].bias == twins.gmr_net.params[li].bias;
  }

  {
    std::fstream io(kernel_path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(0);
    io.write("BADMAGIC", 8);
  }
  bool rejected = false;
  try {
    load_gmr(kernel_path);
  } catch (const std::runtime_error&) {
    rejected = true;
  }
  ok = ok && rejected;
  if (!rejected) detail = "corrupted magic was accepted";
  report(9, "serialization round-trip", ok, detail);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  blas_init();
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--quick") {
      g_bench_repeats = 30;
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.push_back(std::stoi(tok));
    }
  }
  auto wants = [&](int n) {
    return only.empty() || std::find(only.begin(), only.end(), n) != only.end();
  };

  int failures = 0;
  if (wants(1) && !criterion_decomposition()) ++failures;
  if (wants(2) && !criterion_exact_equivariance()) ++failures;
  if (wants(3) && !criterion_smoothing_ablation()) ++failures;
  if (wants(4) && !criterion_gradients()) ++failures;
  if (wants(5) && !criterion_efficiency()) ++failures;
  if (wants(6) && !criterion_parameter_compression()) ++failures;
  if (wants(7) && !criterion_training_demo()) ++failures;
  if (wants(8) && !criterion_logit_invariance()) ++failures;
  if (wants(9) && !criterion_serialization()) ++failures;
  return failures;
}
