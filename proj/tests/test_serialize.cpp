#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gmr/net.hpp"
#include "gmr/serialize.hpp"

using namespace gmr;

TEST_SUITE_BEGIN("serialize");

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const char* name) : path(std::string("/tmp/gmr_test_") + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gmr file round trip is lossless bitwise") {
  TempFile f("params.gmr");
  GmrLayerParams p = make_layer_params(9, 5, 2, 6, 4, 99);
  p.sigma.log_sigma[2] = -1.75;
  save_gmr(f.path, p);

  GmrLayerParams q = load_gmr(f.path);
  CHECK(q.geometry.k == 9);
  CHECK(q.geometry.n == 5);
  CHECK(q.geometry.dims == 2);
  CHECK(q.weights.c_in == 6);
  CHECK(q.weights.c_out == 4);
  REQUIRE(q.weights.w.size() == p.weights.w.size());
  CHECK(std::memcmp(q.weights.w.data(), p.weights.w.data(),
                    sizeof(double) * p.weights.w.size()) == 0);
  CHECK(std::memcmp(q.sigma.log_sigma.data(), p.sigma.log_sigma.data(),
                    sizeof(double) * p.sigma.log_sigma.size()) == 0);
}

TEST_CASE("gmr file starts with the documented magic and json header") {
  TempFile f("magic.gmr");
  save_gmr(f.path, make_layer_params(5, 3, 2, 2, 2, 1));
  std::vector<char> bytes = slurp(f.path);
  REQUIRE(bytes.size() > 12);
  CHECK(std::memcmp(bytes.data(), "GMRCONV1", 8) == 0);
  uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 4);
  const std::string header(bytes.data() + 12, bytes.data() + 12 + len);
  CHECK(header.find("\"k\":5") != std::string::npos);
  CHECK(header.find("\"clip\":[0.01,6.0]") != std::string::npos);
  // payload: 2*2*3 weights + 3 sigmas, 8 bytes each
  CHECK(bytes.size() == 12 + len + 8 * (12 + 3));
}

TEST_CASE("corrupted magic is rejected") {
  TempFile f("bad.gmr");
  save_gmr(f.path, make_layer_params(5, 3, 2, 2, 2, 1));
  {
    std::fstream io(f.path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(0);
    io.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_AS(load_gmr(f.path), std::runtime_error);
}

TEST_CASE("inconsistent extents are rejected") {
  TempFile f("trunc.gmr");
  save_gmr(f.path, make_layer_params(9, 5, 2, 4, 4, 1));
  std::vector<char> bytes = slurp(f.path);
  {
    std::ofstream out(f.path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_gmr(f.path), std::runtime_error);

  // header that claims an unsupported geometry
  TempFile g("badgeo.gmr");
  {
    std::ofstream out(g.path, std::ios::binary);
    out.write("GMRCONV1", 8);
    const std::string header =
        R"({"dims":2,"k":6,"n":3,"c_in":1,"c_out":1,"clip":[0.01,6.0]})";
    const uint32_t len = static_cast<uint32_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
  }
  CHECK_THROWS_AS(load_gmr(g.path), std::runtime_error);
}

TEST_CASE("dataset cache round trip") {
  TempFile f("data.bin");
  SyntheticDatasetSpec spec;
  spec.image_size = 16;
  spec.train_per_class = 3;
  spec.seed = 5;
  Dataset d = make_synthetic_dataset(spec, true);
  save_dataset(f.path, d);
  Dataset e = load_dataset(f.path);
  CHECK(e.height == d.height);
  CHECK(e.classes == d.classes);
  REQUIRE(e.count() == d.count());
  CHECK(std::memcmp(e.images.data(), d.images.data(),
                    sizeof(double) * d.images.numel()) == 0);
  CHECK(e.labels == d.labels);
}

TEST_CASE("network container round trip is lossless bitwise") {
  TempFile f("net.bin");
  TwinNetworks twins = build_twin_networks(6, 17);
  for (const Network* net : {&twins.gmr_net, &twins.dense_net}) {
    save_network(f.path, *net);
    Network loaded = load_network(f.path);
    REQUIRE(loaded.specs.size() == net->specs.size());
    CHECK(loaded.classes == net->classes);
    for (size_t li = 0; li < net->specs.size(); ++li) {
      CHECK(loaded.specs[li].kind == net->specs[li].kind);
      const LayerParams& a = net->params[li];
      const LayerParams& b = loaded.params[li];
      CHECK(a.gmr.weights.w == b.gmr.weights.w);
      CHECK(a.gmr.sigma.log_sigma == b.gmr.sigma.log_sigma);
      CHECK(a.bias == b.bias);
      REQUIRE(a.dense.numel() == b.dense.numel());
      if (a.dense.numel() > 0) {
        CHECK(std::memcmp(a.dense.data(), b.dense.data(),
                          sizeof(double) * a.dense.numel()) == 0);
      }
      REQUIRE(a.lin_w.numel() == b.lin_w.numel());
      if (a.lin_w.numel() > 0) {
        CHECK(std::memcmp(a.lin_w.data(), b.lin_w.data(),
                          sizeof(double) * a.lin_w.numel()) == 0);
      }
    }
  }
}

TEST_CASE("network container rejects a corrupted magic") {
  TempFile f("netbad.bin");
  TwinNetworks twins = build_twin_networks(4, 3);
  save_network(f.path, twins.gmr_net);
  {
    std::fstream io(f.path, std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(0);
    io.write("NOTANET!", 8);
  }
  CHECK_THROWS_AS(load_network(f.path), std::runtime_error);
}

TEST_SUITE_END();
