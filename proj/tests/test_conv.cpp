#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gmr/conv.hpp"
#include "gmr/kernel.hpp"
#include "gmr/rng.hpp"
#include "gmr/tensor.hpp"
#include "oracle.hpp"

using namespace gmr;

TEST_SUITE_BEGIN("conv");

static TensorD weights_tensor(const RingWeights& w) {
  return TensorD(Shape{w.c_out, w.c_in, w.n}, w.w);
}

TEST_CASE("conv_direct counts ones under same padding") {
  TensorD in(Shape{1, 1, 3, 3}, 1.0);
  TensorD k(Shape{1, 1, 3, 3}, 1.0);
  TensorD out = conv_direct(in, k, ConvConfig::same(3));
  CHECK(out.at(0, 0, 1, 1) == 9.0);
  CHECK(out.at(0, 0, 0, 1) == 6.0);
  CHECK(out.at(0, 0, 1, 0) == 6.0);
  CHECK(out.at(0, 0, 0, 0) == 4.0);
  CHECK(out.at(0, 0, 2, 2) == 4.0);
}

TEST_CASE("conv_direct with an identity kernel returns the input") {
  Rng rng(1);
  TensorD in = random_normal<double>(Shape{2, 3, 6, 6}, rng);
  TensorD k(Shape{3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0;
  TensorD out = conv_direct(in, k, ConvConfig::same(3));
  CHECK(max_abs_diff(out, in) == 0.0);
}

TEST_CASE("conv_direct matches the padded-loop oracle") {
  Rng rng(2);
  TensorD in = random_normal<double>(Shape{1, 2, 6, 6}, rng);
  TensorD k = random_normal<double>(Shape{3, 2, 3, 3}, rng);
  TensorD got = conv_direct(in, k, ConvConfig::same(3));
  TensorD want = oracle::conv2d_padded_loop(in, k, 1, 1);
  CHECK(rel_error(got, want) < 1e-13);

  // stride 2, pad 0
  ConvConfig cfg;
  cfg.stride = 2;
  cfg.padding = {0, 0};
  TensorD in2 = random_normal<double>(Shape{2, 3, 9, 9}, rng);
  TensorD k2 = random_normal<double>(Shape{4, 3, 3, 3}, rng);
  CHECK(rel_error(conv_direct(in2, k2, cfg), oracle::conv2d_padded_loop(in2, k2, 2, 0)) < 1e-13);
}

TEST_CASE("conv_direct_loop agrees with the BLAS path") {
  Rng rng(3);
  TensorD in = random_normal<double>(Shape{2, 3, 7, 7}, rng);
  TensorD k = random_normal<double>(Shape{2, 3, 5, 5}, rng);
  CHECK(rel_error(conv_direct_loop(in, k, ConvConfig::same(5)),
                  conv_direct(in, k, ConvConfig::same(5))) < 1e-13);
}

TEST_CASE("conv_direct 3d matches the padded-loop oracle") {
  Rng rng(4);
  TensorD in = random_normal<double>(Shape{1, 2, 5, 5, 5}, rng);
  TensorD k = random_normal<double>(Shape{2, 2, 3, 3, 3}, rng);
  TensorD got = conv_direct(in, k, ConvConfig::same(3, 3));
  TensorD want = oracle::conv3d_padded_loop(in, k, 1, 1);
  CHECK(rel_error(got, want) < 1e-13);
  CHECK(rel_error(conv_direct_loop(in, k, ConvConfig::same(3, 3)), want) < 1e-13);
}

TEST_CASE("conv_direct rejects bad shapes") {
  TensorD in(Shape{1, 2, 4, 4});
  TensorD k(Shape{1, 3, 3, 3});
  CHECK_THROWS_AS(conv_direct(in, k, ConvConfig::same(3)), std::invalid_argument);

  TensorD k2(Shape{1, 2, 3, 3});
  ConvConfig bad;
  bad.stride = 2;
  bad.padding = {0, 0};  // (4 - 3) not divisible by 2
  CHECK_THROWS_AS(conv_direct(in, k2, bad), std::invalid_argument);

  ConvConfig negspan;
  negspan.padding = {0, 0};
  TensorD tiny(Shape{1, 2, 2, 2});
  CHECK_THROWS_AS(conv_direct(tiny, k2, negspan), std::invalid_argument);
}

TEST_CASE("gmr_conv equals conv_direct on the materialized kernel") {
  Rng rng(5);
  for (int k : {3, 5, 7, 9, 11}) {
    const int n = default_ring_count(k);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      GmrLayerParams p = make_layer_params(k, n, 2, 8, 4, rng.next());
      for (double& ls : p.sigma.log_sigma) ls += rng.uniform(-0.2, 0.2);
      p.sigma = clip_sigma(p.sigma, p.geometry);
      TensorD x = random_normal<double>(Shape{2, 8, 16, 16}, rng);
      const ConvConfig cfg = ConvConfig::same(k);
      TensorD fast = gmr_conv(x, p, cfg);
      TensorD ref = conv_direct(x, materialize_kernel(p, build_basis(p.geometry, p.sigma)), cfg);
      worst = std::max(worst, rel_error(fast, ref));
    }
    CHECK_MESSAGE(worst <= 1e-10, "k=" << k << " worst=" << worst);
  }
}

TEST_CASE("gmr_conv zero weights give zero output") {
  GmrLayerParams p = make_layer_params(5, 3, 2, 2, 3, 9);
  std::fill(p.weights.w.begin(), p.weights.w.end(), 0.0);
  Rng rng(6);
  TensorD x = random_normal<double>(Shape{1, 2, 8, 8}, rng);
  TensorD out = gmr_conv(x, p, ConvConfig::same(5));
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("gmr_conv one-hot ring equals direct conv with that ring image") {
  Rng rng(7);
  RingGeometry g = ring_geometry(7, 4);
  SigmaParams s = init_sigma(g);
  GaussianRingBasis b = build_basis(g, s);
  for (int j = 0; j < 4; ++j) {
    GmrLayerParams p;
    p.geometry = g;
    p.sigma = s;
    p.weights = RingWeights{1, 1, 4, std::vector<double>(4, 0.0)};
    p.weights.w[static_cast<size_t>(j)] = 1.0;
    TensorD x = random_normal<double>(Shape{1, 1, 12, 12}, rng);
    TensorD ring(Shape{1, 1, 7, 7},
                 std::vector<double>(b.ring(j), b.ring(j) + b.ring_size()));
    CHECK(rel_error(gmr_conv(x, p, ConvConfig::same(7)),
                    conv_direct(x, ring, ConvConfig::same(7))) < 1e-12);
  }
}

TEST_CASE("gmr_conv is linear in the input") {
  Rng rng(8);
  GmrLayerParams p = make_layer_params(5, 3, 2, 3, 2, rng.next());
  TensorD x = random_normal<double>(Shape{1, 3, 10, 10}, rng);
  TensorD y = random_normal<double>(Shape{1, 3, 10, 10}, rng);
  const double a = 1.7, b = -0.4;
  TensorD mix(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) mix[i] = a * x[i] + b * y[i];
  const ConvConfig cfg = ConvConfig::same(5);
  TensorD lhs = gmr_conv(mix, p, cfg);
  TensorD fx = gmr_conv(x, p, cfg);
  TensorD fy = gmr_conv(y, p, cfg);
  TensorD rhs(lhs.shape());
  for (int64_t i = 0; i < lhs.numel(); ++i) rhs[i] = a * fx[i] + b * fy[i];
  CHECK(rel_error(lhs, rhs) < 1e-11);
}

TEST_CASE("gmr_conv commutes with rot90 and flips") {
  Rng rng(9);
  for (int k : {5, 9}) {
    GmrLayerParams p = make_layer_params(k, default_ring_count(k), 2, 3, 3, rng.next());
    const ConvConfig cfg = ConvConfig::same(k);
    TensorD x = random_normal<double>(Shape{2, 3, 16, 16}, rng);
    TensorD fx = gmr_conv(x, p, cfg);
    for (int q = 1; q < 4; ++q) {
      CHECK(rel_error(gmr_conv(rot90(x, q), p, cfg), rot90(fx, q)) <= 1e-10);
    }
    for (int axis : {2, 3}) {
      CHECK(rel_error(gmr_conv(flip(x, axis), p, cfg), flip(fx, axis)) <= 1e-10);
    }
  }
}

TEST_CASE("gmr_conv 3d matches direct and commutes with all cube symmetries") {
  Rng rng(10);
  for (int k : {3, 5}) {
    GmrLayerParams p = make_layer_params(k, default_ring_count(k), 3, 2, 2, rng.next());
    const ConvConfig cfg = ConvConfig::same(k, 3);
    TensorD x = random_normal<double>(Shape{1, 2, 8, 8, 8}, rng);
    TensorD fast = gmr_conv(x, p, cfg);
    TensorD ref = conv_direct(x, materialize_kernel(p, build_basis(p.geometry, p.sigma)), cfg);
    CHECK(rel_error(fast, ref) <= 1e-10);

    for (const auto& [perm, flips] : cube_symmetries()) {
      TensorD gx = signed_permute3(x, perm, flips);
      CHECK(rel_error(gmr_conv(gx, p, cfg), signed_permute3(fast, perm, flips)) <= 1e-10);
    }
  }
}

TEST_CASE("flipped materialized kernel equals the kernel itself") {
  // cross-correlation vs convolution is moot for this kernel family
  GmrLayerParams p = make_layer_params(9, 5, 2, 2, 2, 17);
  TensorD k = materialize_kernel(p, build_basis(p.geometry, p.sigma));
  TensorD f = flip(flip(k, 2), 3);
  CHECK(std::memcmp(k.data(), f.data(), sizeof(double) * k.numel()) == 0);
}

TEST_CASE("stride above one is flagged non-equivariant") {
  ConvConfig cfg = ConvConfig::same(5);
  CHECK(equivariance_preserving(cfg));
  cfg.stride = 2;
  CHECK(!equivariance_preserving(cfg));
}

TEST_CASE("gmr_conv channel mismatch raises") {
  GmrLayerParams p = make_layer_params(5, 3, 2, 4, 2, 1);
  TensorD x(Shape{1, 3, 8, 8});
  CHECK_THROWS_AS(gmr_conv(x, p, ConvConfig::same(5)), std::invalid_argument);
}

TEST_CASE("engines are bitwise reproducible across worker counts") {
  Rng rng(11);
  GmrLayerParams p = make_layer_params(9, 5, 2, 4, 6, rng.next());
  TensorD x = random_normal<double>(Shape{3, 4, 16, 16}, rng);
  const ConvConfig cfg = ConvConfig::same(9);
  TensorD base = gmr_conv(x, p, cfg, 1);
  for (int threads : {2, 4}) {
    TensorD t = gmr_conv(x, p, cfg, threads);
    CHECK(std::memcmp(base.data(), t.data(), sizeof(double) * base.numel()) == 0);
  }
  TensorD kern = materialize_kernel(p, build_basis(p.geometry, p.sigma));
  TensorD ref = conv_direct(x, kern, cfg, 1);
  for (int threads : {2, 4}) {
    TensorD t = conv_direct(x, kern, cfg, threads);
    CHECK(std::memcmp(ref.data(), t.data(), sizeof(double) * ref.numel()) == 0);
  }
}

TEST_CASE("single-precision decomposition stays within the relaxed tolerance") {
  Rng rng(12);
  GmrLayerParams p = make_layer_params(9, 5, 2, 8, 8, rng.next());
  TensorD xd = random_normal<double>(Shape{2, 8, 16, 16}, rng);
  TensorF x = xd.cast<float>();
  GaussianRingBasis basis = build_basis(p.geometry, p.sigma);
  TensorF basis_f = basis.as_tensor().cast<float>();
  TensorF w_f = weights_tensor(p.weights).cast<float>();
  const ConvConfig cfg = ConvConfig::same(9);
  TensorF fast = gmr_conv<float>(x, basis_f, w_f, cfg);
  TensorF ref = conv_direct<float>(x, materialize_kernel(p, basis).cast<float>(), cfg);
  CHECK(rel_error(fast, ref) < 1e-4);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(13);
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

  SUBCASE("input gradient") {
    double worst = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) {
      TensorD up = x, dn = x;
      up[i] += h;
      dn[i] -= h;
      const double fd = (loss(up, p) - loss(dn, p)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g.input[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-5);
  }

  SUBCASE("ring weight gradient") {
    double worst = 0.0;
    for (size_t i = 0; i < p.weights.w.size(); ++i) {
      GmrLayerParams up = p, dn = p;
      up.weights.w[i] += h;
      dn.weights.w[i] -= h;
      const double fd = (loss(x, up) - loss(x, dn)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g.weights.w[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-5);
  }

  SUBCASE("log-sigma gradient") {
    double worst = 0.0;
    for (size_t i = 0; i < p.sigma.log_sigma.size(); ++i) {
      GmrLayerParams up = p, dn = p;
      up.sigma.log_sigma[i] += h;
      dn.sigma.log_sigma[i] -= h;
      const double fd = (loss(x, up) - loss(x, dn)) / (2.0 * h);
      worst = std::max(worst,
                       std::abs(fd - g.log_sigma[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("zero upstream gradient produces zero gradients") {
  GmrLayerParams p = make_layer_params(5, 3, 2, 2, 2, 3);
  TensorD x(Shape{1, 2, 8, 8}, 0.5);
  TensorD gout(Shape{1, 2, 8, 8}, 0.0);
  GmrGrads g = gmr_conv_backward(x, p, ConvConfig::same(5), gout);
  for (int64_t i = 0; i < g.input.numel(); ++i) CHECK(g.input[i] == 0.0);
  for (double v : g.weights.w) CHECK(v == 0.0);
  for (double v : g.log_sigma) CHECK(v == 0.0);
}

TEST_CASE("dense backward routes grad_out through an identity kernel") {
  Rng rng(14);
  TensorD x = random_normal<double>(Shape{1, 1, 6, 6}, rng);
  TensorD k(Shape{1, 1, 3, 3});
  k.at(0, 0, 1, 1) = 1.0;
  TensorD gout = random_normal<double>(Shape{1, 1, 6, 6}, rng);
  DenseConvGrads g = conv_direct_backward(x, k, ConvConfig::same(3), gout);
  CHECK(rel_error(g.input, gout) < 1e-13);
}

TEST_CASE("dense backward matches finite differences") {
  Rng rng(15);
  TensorD x = random_normal<double>(Shape{1, 2, 6, 6}, rng);
  TensorD k = random_normal<double>(Shape{2, 2, 3, 3}, rng);
  TensorD gout = random_normal<double>(Shape{1, 2, 6, 6}, rng);
  const ConvConfig cfg = ConvConfig::same(3);
  DenseConvGrads g = conv_direct_backward(x, k, cfg, gout);

  auto loss = [&](const TensorD& in, const TensorD& ker) {
    TensorD out = conv_direct(in, ker, cfg);
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
    const double fd = (loss(up, k) - loss(dn, k)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.input[i]) / std::max(1.0, std::abs(fd)));
  }
  for (int64_t i = 0; i < k.numel(); ++i) {
    TensorD up = k, dn = k;
    up[i] += h;
    dn[i] -= h;
    const double fd = (loss(x, up) - loss(x, dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.kernel[i]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("3d gradients match finite differences") {
  Rng rng(16);
  GmrLayerParams p = make_layer_params(3, 2, 3, 2, 2, rng.next());
  const ConvConfig cfg = ConvConfig::same(3, 3);
  TensorD x = random_normal<double>(Shape{1, 2, 4, 4, 4}, rng);
  TensorD gout = random_normal<double>(Shape{1, 2, 4, 4, 4}, rng);
  GmrGrads g = gmr_conv_backward(x, p, cfg, gout);

  auto loss = [&](const GmrLayerParams& params) {
    TensorD out = gmr_conv(x, params, cfg);
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += out[i] * gout[i];
    return acc;
  };
  const double h = 1e-4;
  double worst = 0.0;
  for (size_t i = 0; i < p.weights.w.size(); ++i) {
    GmrLayerParams up = p, dn = p;
    up.weights.w[i] += h;
    dn.weights.w[i] -= h;
    const double fd = (loss(up) - loss(dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.weights.w[i]) / std::max(1.0, std::abs(fd)));
  }
  for (size_t i = 0; i < p.sigma.log_sigma.size(); ++i) {
    GmrLayerParams up = p, dn = p;
    up.sigma.log_sigma[i] += h;
    dn.sigma.log_sigma[i] -= h;
    const double fd = (loss(up) - loss(dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.log_sigma[i]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("op_count formulas and regimes") {
  OpCount oc = op_count(9, 5, 128, 128, {64, 64});
  CHECK(oc.direct_macs == 64LL * 64 * 81 * 128 * 128);
  CHECK(oc.gmr_macs == 64LL * 64 * 5 * (81 + 128 * 128));
  CHECK(oc.ratio() == doctest::Approx(5.0 * (81 + 16384) / (81.0 * 16384)).epsilon(1e-12));
  CHECK(oc.ratio() == doctest::Approx(0.0620).epsilon(0.01));

  // n = k^2 with single channels: the two-stage route loses
  OpCount bad = op_count(3, 9, 1, 1, {8, 8});
  CHECK(bad.ratio() > 1.0);

  // beneficial whenever n < k^2 and n < C_in*C_out
  for (int k : {3, 5, 9}) {
    const int n = default_ring_count(k);
    OpCount good = op_count(k, n, 16, 16, {32, 32});
    CHECK(n < k * k);
    CHECK(n < 16 * 16);
    CHECK(good.ratio() < 1.0);
  }
}

TEST_SUITE_END();
