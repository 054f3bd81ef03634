// End-to-end CLI checks; the binary path comes from GMR_CLI_PATH (set by
// ctest) and falls back to the build-tree layout.

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "gmr/kernel.hpp"
#include "gmr/serialize.hpp"

TEST_SUITE_BEGIN("cli");

namespace {

std::string cli_path() {
  const char* env = std::getenv("GMR_CLI_PATH");
  return env ? env : "./tools/gmr_cli";
}

struct RunResult {
  int exit_code = -1;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file = "/tmp/gmr_cli_test_stdout";
  const std::string cmd = cli_path() + " " + args + " > " + out_file + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.stdout_text = ss.str();
  std::remove(out_file.c_str());
  return r;
}

}  // namespace

TEST_CASE("params reports the documented counts") {
  RunResult r = run_cli("params --k 9 --channels 64");
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("20485") != std::string::npos);
  CHECK(r.stdout_text.find("331776") != std::string::npos);
  CHECK(r.stdout_text.find("16.19") != std::string::npos);
}

TEST_CASE("bench emits identical payloads under --stable-output") {
  const std::string flags =
      "bench --k 3 --channels 4 --spatial 16 --repeats 3 --warmup 1 --seed 5 "
      "--format json --stable-output";
  RunResult a = run_cli(flags);
  RunResult b = run_cli(flags);
  CHECK(a.exit_code == 0);
  CHECK(a.stdout_text == b.stdout_text);
  CHECK(a.stdout_text.find("gmr.bench_report/1") != std::string::npos);
  CHECK(a.stdout_text.find("\"total_seconds\":0") != std::string::npos);
}

TEST_CASE("bench rejects zero repeats with a usage error") {
  RunResult r = run_cli("bench --repeats 0");
  CHECK(r.exit_code == 2);
}

TEST_CASE("missing subcommand is a usage error") {
  RunResult r = run_cli("");
  CHECK(r.exit_code == 2);
}

TEST_CASE("equiv sweep passes its own assertion and writes both files") {
  RunResult r = run_cli(
      "equiv --k 5 --channels 2 --spatial 32 --angles 0 90 --trials 2 --seed 3 "
      "--compare-nearest --assert --out /tmp/gmr_cli_equiv.csv");
  CHECK(r.exit_code == 0);
  std::ifstream main_file("/tmp/gmr_cli_equiv.csv");
  std::ifstream nearest_file("/tmp/gmr_cli_equiv_nearest.csv");
  CHECK(main_file.good());
  CHECK(nearest_file.good());
  std::string header;
  std::getline(main_file, header);
  CHECK(header.find("gmr equivariance report v1") != std::string::npos);
  std::remove("/tmp/gmr_cli_equiv.csv");
  std::remove("/tmp/gmr_cli_equiv_nearest.csv");
}

TEST_CASE("dump-kernel prints a k-by-k grid and validates the ring index") {
  const std::string params_path = "/tmp/gmr_cli_dump.gmr";
  gmr::save_gmr(params_path, gmr::make_layer_params(5, 3, 2, 2, 2, 77));

  RunResult r = run_cli("dump-kernel --params " + params_path + " --ring 0");
  CHECK(r.exit_code == 0);
  int rows = 0, commas = 0;
  const size_t grid_start = r.stdout_text.find('\n') + 1;
  for (size_t i = 0; i < r.stdout_text.size(); ++i) {
    if (r.stdout_text[i] == '\n') ++rows;
    if (i >= grid_start && r.stdout_text[i] == ',') ++commas;
  }
  CHECK(rows == 6);    // header + 5 grid rows
  CHECK(commas == 20); // 4 commas per grid row

  RunResult bad = run_cli("dump-kernel --params " + params_path + " --ring 99");
  CHECK(bad.exit_code == 2);

  RunResult full = run_cli("dump-kernel --params " + params_path + " --full");
  CHECK(full.exit_code == 0);
  CHECK(full.stdout_text.find("kernel dump v1") != std::string::npos);
  std::remove(params_path.c_str());
}

TEST_SUITE_END();
