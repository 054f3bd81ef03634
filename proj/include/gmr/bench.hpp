#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gmr {

// Timing workload: one convolution layer shape, repeated `repeats` times on a
// fixed random input after `warmup` untimed calls. All methods in a run see
// the identical input (checksum reported).
struct BenchSpec {
  int k = 9;
  int n = 0;  // 0 -> (k + 1) / 2
  int c_in = 128;
  int c_out = 128;
  int64_t height = 64;
  int64_t width = 64;
  int64_t batch = 2;
  int repeats = 1000;
  int warmup = 100;
  uint64_t seed = 0;
  int threads = 1;
};

struct BenchResult {
  std::string method;
  int k = 0;
  int n = 0;
  int repeats = 0;
  double total_seconds = 0.0;
  double per_call_us = 0.0;
  double median_batch_seconds = 0.0;  // median of 5 timed batches of repeats
  int64_t macs_per_call = 0;
  uint64_t input_checksum = 0;
  double output_sample = 0.0;
};

// im2col+GEMM methods; the *_loop variants are the plain nested-loop
// references (orders of magnitude slower; select them explicitly).
extern const char* const kBenchMethods[5];

std::vector<std::string> default_bench_methods();

std::vector<BenchResult> run_bench(const BenchSpec& spec,
                                   const std::vector<std::string>& methods);

void write_bench_csv(const std::vector<BenchResult>& results, std::ostream& out,
                     bool stable_output);
void write_bench_json(const std::vector<BenchResult>& results, std::ostream& out,
                      bool stable_output);

}  // namespace gmr
