#include "gmr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <cstring>
#include <ostream>
#include <stdexcept>

#include "gmr/blas.hpp"
#include "gmr/conv.hpp"
#include "gmr/kernel.hpp"
#include "gmr/rng.hpp"
#include "gmr/tensor.hpp"

namespace gmr {

const char* const kBenchMethods[5] = {
    "direct_dense", "direct_materialized_gmr", "efficient_gmr",
    "direct_dense_loop", "direct_materialized_gmr_loop"};

std::vector<std::string> default_bench_methods() {
  return {"direct_dense", "direct_materialized_gmr", "efficient_gmr"};
}

namespace {

uint64_t fnv1a(const void* data, size_t bytes) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// K_GMR in float: (c_out*c_in, n) x (n, k*k) in one GEMM.
void materialize_f(const Tensor<float>& weights, const Tensor<float>& basis,
                   Tensor<float>& kernel) {
  const int64_t pairs = weights.dim(0) * weights.dim(1);
  const int64_t n = weights.dim(2);
  const int64_t kd = basis.numel() / n;
  gemm<float>(false, false, pairs, kd, n, 1.0f, weights.data(), n, basis.data(),
              kd, 0.0f, kernel.data(), kd);
}

}  // namespace

std::vector<BenchResult> run_bench(const BenchSpec& spec,
                                   const std::vector<std::string>& methods) {
  if (spec.repeats < 1) throw std::invalid_argument("bench: repeats must be >= 1");
  if (spec.warmup < 0) throw std::invalid_argument("bench: warmup must be >= 0");
  const int n = spec.n > 0 ? spec.n : default_ring_count(spec.k);

  GmrLayerParams params = make_layer_params(spec.k, n, 2, spec.c_in, spec.c_out,
                                            spec.seed ^ 0x6b656e31ULL);
  const GaussianRingBasis basis = build_basis(params.geometry, params.sigma);
  const Tensor<float> basis_f = basis.as_tensor().cast<float>();
  const Tensor<float> weights_f =
      Tensor<double>(Shape{spec.c_out, spec.c_in, n}, params.weights.w).cast<float>();

  Rng rng(spec.seed);
  const Tensor<float> input =
      random_normal<float>(Shape{spec.batch, spec.c_in, spec.height, spec.width}, rng);
  const uint64_t checksum =
      fnv1a(input.data(), sizeof(float) * static_cast<size_t>(input.numel()));

  Tensor<float> dense_kernel =
      random_normal<float>(Shape{spec.c_out, spec.c_in, spec.k, spec.k}, rng, 0.0,
                           std::sqrt(2.0 / (static_cast<double>(spec.c_in) * spec.k * spec.k)));

  const ConvConfig cfg = ConvConfig::same(spec.k);
  const OpCount oc = op_count(spec.k, n, spec.c_in, spec.c_out, {spec.height, spec.width});

  Tensor<float> materialized(Shape{spec.c_out, spec.c_in, spec.k, spec.k});

  std::vector<BenchResult> results;
  for (const std::string& method : methods) {
    std::function<Tensor<float>()> call;
    int64_t macs = 0;
    if (method == "direct_dense") {
      call = [&] { return conv_direct(input, dense_kernel, cfg, spec.threads); };
      macs = oc.direct_macs * spec.batch;
    } else if (method == "direct_materialized_gmr") {
      // the naive route pays for the full kernel on every call
      call = [&] {
        materialize_f(weights_f, basis_f, materialized);
        return conv_direct(input, materialized, cfg, spec.threads);
      };
      macs = oc.direct_macs * spec.batch;
    } else if (method == "efficient_gmr") {
      call = [&] { return gmr_conv(input, basis_f, weights_f, cfg, spec.threads); };
      macs = oc.gmr_macs * spec.batch;
    } else if (method == "direct_dense_loop") {
      call = [&] { return conv_direct_loop(input, dense_kernel, cfg); };
      macs = oc.direct_macs * spec.batch;
    } else if (method == "direct_materialized_gmr_loop") {
      call = [&] {
        materialize_f(weights_f, basis_f, materialized);
        return conv_direct_loop(input, materialized, cfg);
      };
      macs = oc.direct_macs * spec.batch;
    } else {
      throw std::invalid_argument("bench: unknown method " + method);
    }

    BenchResult r;
    r.method = method;
    r.k = spec.k;
    r.n = n;
    r.repeats = spec.repeats;
    r.macs_per_call = macs;
    r.input_checksum = checksum;

    for (int i = 0; i < spec.warmup; ++i) {
      Tensor<float> out = call();
      r.output_sample += static_cast<double>(out[out.numel() / 2]);
    }

    double batch_seconds[5] = {0, 0, 0, 0, 0};
    int done = 0;
    for (int group = 0; group < 5; ++group) {
      const int target = ((group + 1) * spec.repeats) / 5;
      const auto t0 = std::chrono::steady_clock::now();
      for (; done < target; ++done) {
        Tensor<float> out = call();
        r.output_sample += static_cast<double>(out[out.numel() / 2]);
      }
      batch_seconds[group] = seconds_since(t0);
      r.total_seconds += batch_seconds[group];
    }
    std::sort(batch_seconds, batch_seconds + 5);
    r.median_batch_seconds = batch_seconds[2];
    r.per_call_us = r.total_seconds / spec.repeats * 1e6;
    results.push_back(std::move(r));
  }
  return results;
}

void write_bench_csv(const std::vector<BenchResult>& results, std::ostream& out,
                     bool stable_output) {
  out << "# gmr bench report v1\n";
  out << "method,k,n,repeats,total_seconds,per_call_us,median_batch_seconds,"
         "macs_per_call,input_checksum\n";
  out.precision(9);
  for (const auto& r : results) {
    out << r.method << "," << r.k << "," << r.n << "," << r.repeats << ","
        << (stable_output ? 0.0 : r.total_seconds) << ","
        << (stable_output ? 0.0 : r.per_call_us) << ","
        << (stable_output ? 0.0 : r.median_batch_seconds) << "," << r.macs_per_call
        << "," << r.input_checksum << "\n";
  }
}

void write_bench_json(const std::vector<BenchResult>& results, std::ostream& out,
                      bool stable_output) {
  out.precision(9);
  out << "{\"schema\":\"gmr.bench_report/1\",\"results\":[";
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (i) out << ",";
    out << "{\"method\":\"" << r.method << "\",\"k\":" << r.k << ",\"n\":" << r.n
        << ",\"repeats\":" << r.repeats
        << ",\"total_seconds\":" << (stable_output ? 0.0 : r.total_seconds)
        << ",\"per_call_us\":" << (stable_output ? 0.0 : r.per_call_us)
        << ",\"median_batch_seconds\":" << (stable_output ? 0.0 : r.median_batch_seconds)
        << ",\"macs_per_call\":" << r.macs_per_call << ",\"input_checksum\":"
        << r.input_checksum << "}";
  }
  out << "]}\n";
}

}  // namespace gmr
