// Command-line front end: convolution timing benchmarks, parameter
// accounting, equivariance sweeps, the synthetic training demo, and kernel
// dumps. Reports are CSV or JSON with versioned headers; --stable-output
// zeroes wall-clock fields so repeated runs are byte-identical.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "gmr/bench.hpp"
#include "gmr/blas.hpp"
#include "gmr/equiv.hpp"
#include "gmr/kernel.hpp"
#include "gmr/net.hpp"
#include "gmr/serialize.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitAssertFailed = 3;

using nlohmann::json;

void write_text_or_file(const std::string& out_path, const std::string& payload) {
  if (out_path.empty()) {
    std::cout << payload;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open output file " + out_path);
  out << payload;
}

struct CommonOpts {
  uint64_t seed = 0;
  int threads = 1;
  std::string out_path;
  std::string format = "csv";
  bool stable_output = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads for the engines")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out_path, "output file (default stdout)");
  cmd->add_option("--format", o.format, "csv|json")
      ->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("--stable-output", o.stable_output,
                "zero wall-clock fields for byte-identical reports");
}

int cmd_bench(const CommonOpts& common, const std::vector<int>& k_list, int rings,
              int channels, int spatial, int batch, int repeats, int warmup,
              const std::vector<std::string>& methods, bool assert_mode) {
  std::vector<gmr::BenchResult> all;
  for (int k : k_list) {
    gmr::BenchSpec spec;
    spec.k = k;
    spec.n = rings;
    spec.c_in = spec.c_out = channels;
    spec.height = spec.width = spatial;
    spec.batch = batch;
    spec.repeats = repeats;
    spec.warmup = warmup;
    spec.seed = common.seed;
    spec.threads = common.threads;
    std::vector<gmr::BenchResult> res = gmr::run_bench(spec, methods);
    all.insert(all.end(), res.begin(), res.end());
  }

  std::ostringstream payload;
  if (common.format == "json") {
    gmr::write_bench_json(all, payload, common.stable_output);
  } else {
    gmr::write_bench_csv(all, payload, common.stable_output);
  }
  write_text_or_file(common.out_path, payload.str());

  for (const auto& r : all) {
    std::cerr << "bench " << r.method << " k=" << r.k << ": " << r.total_seconds
              << " s total, " << r.per_call_us << " us/call (checksum "
              << r.input_checksum << ")\n";
  }

  if (assert_mode) {
    for (int k : k_list) {
      double efficient = -1.0, direct = -1.0;
      for (const auto& r : all) {
        if (r.k != k) continue;
        if (r.method == "efficient_gmr") efficient = r.total_seconds;
        if (r.method == "direct_materialized_gmr") direct = r.total_seconds;
      }
      if (efficient < 0.0 || direct < 0.0) {
        std::cerr << "--assert requires efficient_gmr and direct_materialized_gmr\n";
        return kExitUsage;
      }
      if (efficient >= direct) {
        std::cerr << "assertion failed: efficient_gmr (" << efficient
                  << " s) not faster than direct_materialized_gmr (" << direct
                  << " s) at k=" << k << "\n";
        return kExitAssertFailed;
      }
    }
  }
  return kExitOk;
}

int cmd_params(const CommonOpts& common, int k, int rings,
               const std::vector<int>& channels) {
  const int n = rings > 0 ? rings : gmr::default_ring_count(k);
  const gmr::RingGeometry g = gmr::ring_geometry(k, n);
  std::ostringstream payload;
  if (common.format == "json") {
    json rows = json::array();
    for (int c : channels) {
      const gmr::ParameterCount pc = gmr::parameter_count(c, c, g);
      rows.push_back({{"channels", c},
                      {"gmr_params", pc.gmr},
                      {"dense_params", pc.dense},
                      {"compression", pc.compression()}});
    }
    payload << json{{"schema", "gmr.params_report/1"}, {"k", k}, {"n", n},
                    {"rows", rows}}
                   .dump(2)
            << "\n";
  } else {
    payload << "# gmr params report v1, k=" << k << ", n=" << n << "\n";
    payload << "channels,gmr_params,dense_params,compression\n";
    for (int c : channels) {
      const gmr::ParameterCount pc = gmr::parameter_count(c, c, g);
      payload << c << "," << pc.gmr << "," << pc.dense << ","
              << pc.compression() << "\n";
    }
  }
  write_text_or_file(common.out_path, payload.str());
  return kExitOk;
}

int cmd_equiv(const CommonOpts& common, int k, int rings, int channels, int spatial,
              std::vector<double> angles, int trials, bool compare_nearest,
              bool assert_mode) {
  const int n = rings > 0 ? rings : gmr::default_ring_count(k);
  gmr::GmrLayerParams params =
      gmr::make_layer_params(k, n, 2, channels, channels, common.seed ^ 0x1f2e3d4cULL);
  const gmr::ConvConfig cfg = gmr::ConvConfig::same(k);
  if (angles.empty()) angles = gmr::default_angles();

  const gmr::GaussianRingBasis basis = gmr::build_basis(params.geometry, params.sigma);
  const gmr::TensorD basis_t = basis.as_tensor();
  const gmr::TensorD weights(gmr::Shape{channels, channels, n}, params.weights.w);
  const gmr::OpFn op = [&](const gmr::TensorD& x) {
    return gmr::gmr_conv(x, basis_t, weights, cfg, 1);
  };

  gmr::InputSpec input;
  input.channels = channels;
  input.height = input.width = spatial;

  const double mask_margin = k;
  gmr::EquivarianceReport report =
      gmr::angle_sweep(op, input, mask_margin, angles, trials, common.seed);

  const double exact = gmr::check_exact_symmetry(params, cfg, 10, common.seed);
  const double reflect = gmr::reflection_check(op, input, common.seed);
  std::cerr << "exact rot90/flip commutation error: " << exact << "\n";
  std::cerr << "reflection commutation error:       " << reflect << "\n";

  auto emit = [&](const gmr::EquivarianceReport& r, const std::string& suffix) {
    std::ostringstream payload;
    if (common.format == "json") {
      gmr::write_report_json(r, payload);
    } else {
      gmr::write_report_csv(r, payload);
    }
    std::string path = common.out_path;
    if (!path.empty() && !suffix.empty()) {
      const size_t dot = path.rfind('.');
      path = dot == std::string::npos ? path + suffix
                                      : path.substr(0, dot) + suffix + path.substr(dot);
    }
    write_text_or_file(path, payload.str());
  };
  emit(report, "");

  if (compare_nearest) {
    const gmr::GaussianRingBasis nearest = gmr::build_nearest_ring_basis(params.geometry);
    const gmr::TensorD nearest_t = nearest.as_tensor();
    const gmr::OpFn hard = [&](const gmr::TensorD& x) {
      return gmr::gmr_conv(x, nearest_t, weights, cfg, 1);
    };
    emit(gmr::angle_sweep(hard, input, mask_margin, angles, trials, common.seed),
         "_nearest");
  }

  if (assert_mode && (exact > 1e-10 || reflect > 1e-10)) {
    std::cerr << "assertion failed: discrete symmetry error above 1e-10\n";
    return kExitAssertFailed;
  }
  return kExitOk;
}

int cmd_train_demo(const CommonOpts& common, const std::string& config_path,
                   const std::string& out_dir, bool assert_mode) {
  gmr::TrainDemoConfig cfg;
  cfg.train.seed = common.seed ? common.seed : cfg.train.seed;
  cfg.train.threads = common.threads;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    json j = json::parse(in);
    if (j.contains("dataset")) {
      const json& d = j["dataset"];
      cfg.dataset.image_size = d.value("image_size", cfg.dataset.image_size);
      cfg.dataset.classes = d.value("classes", cfg.dataset.classes);
      cfg.dataset.train_per_class = d.value("train_per_class", cfg.dataset.train_per_class);
      cfg.dataset.test_per_class = d.value("test_per_class", cfg.dataset.test_per_class);
      cfg.dataset.noise_std = d.value("noise_std", cfg.dataset.noise_std);
      cfg.dataset.ring_width_lo = d.value("ring_width_lo", cfg.dataset.ring_width_lo);
      cfg.dataset.ring_width_hi = d.value("ring_width_hi", cfg.dataset.ring_width_hi);
      cfg.dataset.spacing_lo = d.value("spacing_lo", cfg.dataset.spacing_lo);
      cfg.dataset.spacing_hi = d.value("spacing_hi", cfg.dataset.spacing_hi);
      cfg.dataset.radius_lo = d.value("radius_lo", cfg.dataset.radius_lo);
      cfg.dataset.radius_hi = d.value("radius_hi", cfg.dataset.radius_hi);
      cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.momentum = t.value("momentum", cfg.train.momentum);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.seed = t.value("seed", cfg.train.seed);
    }
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    if (j.contains("eval_angles")) {
      cfg.eval_angles = j["eval_angles"].get<std::vector<double>>();
    }
  }

  const gmr::TrainDemoResult r = gmr::run_train_demo(cfg);

  auto acc_json = [](const std::vector<std::pair<double, double>>& table) {
    json rows = json::array();
    for (const auto& [angle, acc] : table) rows.push_back({{"angle", angle}, {"accuracy", acc}});
    return rows;
  };
  json metrics{{"schema", "gmr.train_demo/1"},
               {"base_channels", cfg.base_channels},
               {"epochs", cfg.train.epochs},
               {"seed", cfg.train.seed},
               {"gmr", {{"train_accuracy", r.gmr_train_acc},
                        {"epoch_loss", r.gmr_curve.epoch_loss},
                        {"test_accuracy", acc_json(r.gmr_acc)},
                        {"parameters", r.nets.gmr_net.parameter_total()}}},
               {"dense", {{"train_accuracy", r.dense_train_acc},
                          {"epoch_loss", r.dense_curve.epoch_loss},
                          {"test_accuracy", acc_json(r.dense_acc)},
                          {"parameters", r.nets.dense_net.parameter_total()}}}};

  if (!out_dir.empty()) {
    gmr::save_network(out_dir + "/gmr_net.bin", r.nets.gmr_net);
    gmr::save_network(out_dir + "/dense_net.bin", r.nets.dense_net);
    gmr::save_dataset(out_dir + "/train.bin", gmr::make_synthetic_dataset(cfg.dataset, true));
    gmr::save_dataset(out_dir + "/test.bin", gmr::make_synthetic_dataset(cfg.dataset, false));
    std::ofstream m(out_dir + "/metrics.json");
    m << metrics.dump(2) << "\n";
  }
  write_text_or_file(common.out_path, metrics.dump(2) + "\n");

  if (assert_mode) {
    auto at_angle = [](const std::vector<std::pair<double, double>>& table, double angle) {
      for (const auto& [a, acc] : table) {
        if (a == angle) return acc;
      }
      throw std::runtime_error("angle missing from evaluation table");
    };
    const double gmr0 = at_angle(r.gmr_acc, 0.0);
    const double dense0 = at_angle(r.dense_acc, 0.0);
    double gmr_min = 1.0;
    for (const auto& [a, acc] : r.gmr_acc) gmr_min = std::min(gmr_min, acc);
    const bool ok = gmr0 >= 0.90 && dense0 >= 0.90 && gmr_min >= gmr0 - 0.05 &&
                    at_angle(r.dense_acc, 45.0) <= dense0 - 0.15;
    if (!ok) {
      std::cerr << "assertion failed: training-demo robustness bounds not met\n";
      return kExitAssertFailed;
    }
  }
  return kExitOk;
}

int cmd_dump_kernel(const CommonOpts& common, const std::string& params_path,
                    int ring, bool full, int out_channel, int in_channel) {
  const gmr::GmrLayerParams p = gmr::load_gmr(params_path);
  if (p.geometry.dims != 2) throw std::runtime_error("dump-kernel supports 2d kernels");
  const int k = p.geometry.k;
  std::ostringstream payload;
  payload.precision(12);
  if (full) {
    if (out_channel >= p.weights.c_out || in_channel >= p.weights.c_in) {
      throw std::invalid_argument("dump-kernel: channel out of range");
    }
    const gmr::TensorD kern =
        gmr::materialize_kernel(p, gmr::build_basis(p.geometry, p.sigma));
    payload << "# gmr kernel dump v1, k=" << k << ", out_channel=" << out_channel
            << ", in_channel=" << in_channel << "\n";
    for (int y = 0; y < k; ++y) {
      for (int x = 0; x < k; ++x) {
        payload << kern.at(int64_t(out_channel), int64_t(in_channel), int64_t(y), int64_t(x))
                << (x + 1 == k ? "\n" : ",");
      }
    }
  } else {
    if (ring < 0 || ring >= p.geometry.n) {
      throw std::invalid_argument("dump-kernel: ring index out of range");
    }
    const gmr::GaussianRingBasis basis = gmr::build_basis(p.geometry, p.sigma);
    payload << "# gmr ring dump v1, k=" << k << ", ring=" << ring << "\n";
    const double* m = basis.ring(ring);
    for (int y = 0; y < k; ++y) {
      for (int x = 0; x < k; ++x) {
        payload << m[y * k + x] << (x + 1 == k ? "\n" : ",");
      }
    }
  }
  write_text_or_file(common.out_path, payload.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  gmr::blas_init();
  CLI::App app{"GMR convolution benchmarks, equivariance checks, and demos"};
  app.require_subcommand(1);

  // bench
  CommonOpts bench_common;
  std::vector<int> bench_k{9};
  int bench_rings = 0, bench_channels = 128, bench_spatial = 64, bench_batch = 2;
  int bench_repeats = 1000, bench_warmup = 100;
  std::vector<std::string> bench_methods = gmr::default_bench_methods();
  bool bench_assert = false;
  CLI::App* bench = app.add_subcommand("bench", "time the convolution engines");
  add_common(bench, bench_common);
  bench->add_option("--k", bench_k, "kernel widths");
  bench->add_option("--rings", bench_rings, "ring count (default (k+1)/2)");
  bench->add_option("--channels", bench_channels, "input and output channels");
  bench->add_option("--spatial", bench_spatial, "square input extent");
  bench->add_option("--batch", bench_batch, "batch size");
  bench->add_option("--repeats", bench_repeats, "timed calls per method")
      ->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bench_warmup, "untimed calls per method");
  bench->add_option("--methods", bench_methods,
                    "subset of: direct_dense direct_materialized_gmr efficient_gmr "
                    "direct_dense_loop direct_materialized_gmr_loop");
  bench->add_flag("--assert", bench_assert,
                  "exit 3 unless efficient_gmr beats direct_materialized_gmr");

  // params
  CommonOpts params_common;
  int params_k = 9, params_rings = 0;
  std::vector<int> params_channels{16, 32, 64, 128};
  CLI::App* params = app.add_subcommand("params", "parameter counts and compression");
  add_common(params, params_common);
  params->add_option("--k", params_k, "kernel width");
  params->add_option("--rings", params_rings, "ring count (default (k+1)/2)");
  params->add_option("--channels", params_channels, "channel widths to tabulate");

  // equiv
  CommonOpts equiv_common;
  int equiv_k = 9, equiv_rings = 0, equiv_channels = 3, equiv_spatial = 64,
      equiv_trials = 10;
  std::vector<double> equiv_angles;
  bool equiv_nearest = false, equiv_assert = false;
  CLI::App* equiv = app.add_subcommand("equiv", "equivariance error sweeps");
  add_common(equiv, equiv_common);
  equiv->add_option("--k", equiv_k, "kernel width");
  equiv->add_option("--rings", equiv_rings, "ring count (default (k+1)/2)");
  equiv->add_option("--channels", equiv_channels, "layer channels");
  equiv->add_option("--spatial", equiv_spatial, "square input extent");
  equiv->add_option("--angles", equiv_angles, "angle grid (default 0..350 step 10)");
  equiv->add_option("--trials", equiv_trials, "random inputs per angle");
  equiv->add_flag("--compare-nearest", equiv_nearest,
                  "also sweep the unsmoothed nearest-ring layer");
  equiv->add_flag("--assert", equiv_assert, "exit 3 if exact symmetry exceeds 1e-10");

  // train-demo
  CommonOpts train_common;
  std::string train_config, train_out_dir;
  bool train_assert = false;
  CLI::App* train = app.add_subcommand("train-demo",
                                       "train twin networks on the synthetic task");
  add_common(train, train_common);
  train->add_option("--config", train_config, "JSON config file");
  train->add_option("--out-dir", train_out_dir,
                    "directory for metrics, nets, and dataset caches");
  train->add_flag("--assert", train_assert, "exit 3 unless the robustness gap holds");

  // dump-kernel
  CommonOpts dump_common;
  std::string dump_params;
  int dump_ring = 0, dump_oc = 0, dump_ic = 0;
  bool dump_full = false;
  CLI::App* dump = app.add_subcommand("dump-kernel", "CSV grid of kernel values");
  add_common(dump, dump_common);
  dump->add_option("--params", dump_params, "a .gmr parameter file")->required();
  dump->add_option("--ring", dump_ring, "ring index to dump");
  dump->add_flag("--full", dump_full, "dump the materialized kernel instead");
  dump->add_option("--out-channel", dump_oc, "output channel for --full");
  dump->add_option("--in-channel", dump_ic, "input channel for --full");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (bench->parsed()) {
      gmr::set_blas_threads(1);  // call-level parallelism only, deterministic
      return cmd_bench(bench_common, bench_k, bench_rings, bench_channels,
                       bench_spatial, bench_batch, bench_repeats, bench_warmup,
                       bench_methods, bench_assert);
    }
    if (params->parsed()) {
      return cmd_params(params_common, params_k, params_rings, params_channels);
    }
    if (equiv->parsed()) {
      return cmd_equiv(equiv_common, equiv_k, equiv_rings, equiv_channels,
                       equiv_spatial, equiv_angles, equiv_trials, equiv_nearest,
                       equiv_assert);
    }
    if (train->parsed()) {
      return cmd_train_demo(train_common, train_config, train_out_dir, train_assert);
    }
    if (dump->parsed()) {
      return cmd_dump_kernel(dump_common, dump_params, dump_ring, dump_full,
                             dump_oc, dump_ic);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
