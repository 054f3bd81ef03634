#include "gmr/serialize.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gmr {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and this port assumes a "
              "little-endian host");

namespace {

using nlohmann::json;

constexpr char kGmrMagic[8] = {'G', 'M', 'R', 'C', 'O', 'N', 'V', '1'};
constexpr char kDenseMagic[8] = {'G', 'M', 'R', 'D', 'E', 'N', 'S', '1'};
constexpr char kBiasMagic[8] = {'G', 'M', 'R', 'B', 'I', 'A', 'S', '1'};
constexpr char kLinearMagic[8] = {'G', 'M', 'R', 'L', 'I', 'N', '0', '1'};
constexpr char kNetMagic[8] = {'G', 'M', 'R', 'N', 'E', 'T', '0', '1'};
constexpr char kDatasetMagic[8] = {'G', 'M', 'R', 'D', 'S', 'E', 'T', '1'};

void write_magic(std::ostream& out, const char (&magic)[8]) {
  out.write(magic, 8);
}

void expect_magic(std::istream& in, const char (&magic)[8], const char* what) {
  char got[8];
  in.read(got, 8);
  if (!in || std::memcmp(got, magic, 8) != 0) {
    throw std::runtime_error(std::string(what) + ": bad magic");
  }
}

void write_json_header(std::ostream& out, const json& j) {
  const std::string text = j.dump();
  const uint32_t len = static_cast<uint32_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

json read_json_header(std::istream& in, const char* what) {
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 24)) {
    throw std::runtime_error(std::string(what) + ": bad header length");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error(std::string(what) + ": truncated header");
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error(std::string(what) + ": invalid header JSON");
  return j;
}

void write_f64(std::ostream& out, const double* data, size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void read_f64(std::istream& in, double* data, size_t count, const char* what) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error(std::string(what) + ": truncated payload");
}

}  // namespace

void write_gmr(std::ostream& out, const GmrLayerParams& p, int c_in, int c_out) {
  if (p.weights.c_in != c_in || p.weights.c_out != c_out) {
    throw std::invalid_argument("write_gmr: channel extents disagree with weights");
  }
  write_magic(out, kGmrMagic);
  json header{{"dims", p.geometry.dims},
              {"k", p.geometry.k},
              {"n", p.geometry.n},
              {"c_in", c_in},
              {"c_out", c_out},
              {"clip", {kSigmaMin, sigma_upper_bound(p.geometry)}}};
  write_json_header(out, header);
  write_f64(out, p.weights.w.data(), p.weights.w.size());
  write_f64(out, p.sigma.log_sigma.data(), p.sigma.log_sigma.size());
}

GmrLayerParams read_gmr(std::istream& in) {
  expect_magic(in, kGmrMagic, "gmr file");
  const json header = read_json_header(in, "gmr file");
  if (!header.contains("dims") || !header.contains("k") || !header.contains("n") ||
      !header.contains("c_in") || !header.contains("c_out")) {
    throw std::runtime_error("gmr file: missing header fields");
  }
  const int dims = header["dims"].get<int>();
  const int k = header["k"].get<int>();
  const int n = header["n"].get<int>();
  const int c_in = header["c_in"].get<int>();
  const int c_out = header["c_out"].get<int>();
  if (c_in < 1 || c_out < 1) throw std::runtime_error("gmr file: inconsistent extents");

  GmrLayerParams p;
  try {
    p.geometry = ring_geometry(k, n, dims);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("gmr file: ") + e.what());
  }
  p.weights.c_out = c_out;
  p.weights.c_in = c_in;
  p.weights.n = n;
  p.weights.w.resize(static_cast<size_t>(static_cast<int64_t>(c_out) * c_in * n));
  p.sigma.log_sigma.resize(static_cast<size_t>(n));
  read_f64(in, p.weights.w.data(), p.weights.w.size(), "gmr file");
  read_f64(in, p.sigma.log_sigma.data(), p.sigma.log_sigma.size(), "gmr file");
  return p;
}

void save_gmr(const std::string& path, const GmrLayerParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_gmr: cannot open " + path);
  write_gmr(out, p, p.weights.c_in, p.weights.c_out);
  if (!out) throw std::runtime_error("save_gmr: write failed for " + path);
}

GmrLayerParams load_gmr(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_gmr: cannot open " + path);
  return read_gmr(in);
}

void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  write_magic(out, kDatasetMagic);
  write_json_header(out, json{{"version", 1},
                              {"count", d.count()},
                              {"height", d.height},
                              {"width", d.width},
                              {"classes", d.classes}});
  write_f64(out, d.images.data(), static_cast<size_t>(d.images.numel()));
  out.write(reinterpret_cast<const char*>(d.labels.data()),
            static_cast<std::streamsize>(d.labels.size() * sizeof(int32_t)));
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  expect_magic(in, kDatasetMagic, "dataset file");
  const json header = read_json_header(in, "dataset file");
  Dataset d;
  const int64_t count = header.at("count").get<int64_t>();
  d.height = header.at("height").get<int64_t>();
  d.width = header.at("width").get<int64_t>();
  d.classes = header.at("classes").get<int>();
  if (count < 1 || d.height < 1 || d.width < 1 || d.classes < 1) {
    throw std::runtime_error("dataset file: inconsistent extents");
  }
  d.images = Tensor<double>(Shape{count, 1, d.height, d.width});
  d.labels.resize(static_cast<size_t>(count));
  read_f64(in, d.images.data(), static_cast<size_t>(d.images.numel()), "dataset file");
  in.read(reinterpret_cast<char*>(d.labels.data()),
          static_cast<std::streamsize>(d.labels.size() * sizeof(int32_t)));
  if (!in) throw std::runtime_error("dataset file: truncated labels");
  return d;
}

namespace {

const char* kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kGmrConv: return "gmr_conv";
    case LayerKind::kDenseConv: return "dense_conv";
    case LayerKind::kBias: return "bias";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kAvgPoolDown: return "avg_pool_down";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kLinear: return "linear";
  }
  throw std::logic_error("unreachable layer kind");
}

LayerKind kind_from_name(const std::string& name) {
  if (name == "gmr_conv") return LayerKind::kGmrConv;
  if (name == "dense_conv") return LayerKind::kDenseConv;
  if (name == "bias") return LayerKind::kBias;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "avg_pool_down") return LayerKind::kAvgPoolDown;
  if (name == "global_avg_pool") return LayerKind::kGlobalAvgPool;
  if (name == "linear") return LayerKind::kLinear;
  throw std::runtime_error("network file: unknown layer kind " + name);
}

void write_dense_block(std::ostream& out, const Tensor<double>& kernel) {
  write_magic(out, kDenseMagic);
  write_json_header(out, json{{"c_out", kernel.dim(0)},
                              {"c_in", kernel.dim(1)},
                              {"k", kernel.dim(2)},
                              {"dims", kernel.rank() - 2}});
  write_f64(out, kernel.data(), static_cast<size_t>(kernel.numel()));
}

Tensor<double> read_dense_block(std::istream& in) {
  expect_magic(in, kDenseMagic, "dense block");
  const json h = read_json_header(in, "dense block");
  const int64_t c_out = h.at("c_out").get<int64_t>();
  const int64_t c_in = h.at("c_in").get<int64_t>();
  const int64_t k = h.at("k").get<int64_t>();
  const int dims = h.at("dims").get<int>();
  if (c_out < 1 || c_in < 1 || k < 1 || dims < 2 || dims > 3) {
    throw std::runtime_error("dense block: inconsistent extents");
  }
  Shape shape{c_out, c_in};
  for (int d = 0; d < dims; ++d) shape.push_back(k);
  Tensor<double> kernel(shape);
  read_f64(in, kernel.data(), static_cast<size_t>(kernel.numel()), "dense block");
  return kernel;
}

void write_bias_block(std::ostream& out, const std::vector<double>& bias) {
  write_magic(out, kBiasMagic);
  write_json_header(out, json{{"channels", bias.size()}});
  write_f64(out, bias.data(), bias.size());
}

std::vector<double> read_bias_block(std::istream& in) {
  expect_magic(in, kBiasMagic, "bias block");
  const json h = read_json_header(in, "bias block");
  const int64_t channels = h.at("channels").get<int64_t>();
  if (channels < 1) throw std::runtime_error("bias block: inconsistent extents");
  std::vector<double> bias(static_cast<size_t>(channels));
  read_f64(in, bias.data(), bias.size(), "bias block");
  return bias;
}

}  // namespace

void save_network(const std::string& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_network: cannot open " + path);
  write_magic(out, kNetMagic);

  json layers = json::array();
  for (const auto& spec : net.specs) {
    json j{{"kind", kind_name(spec.kind)}};
    switch (spec.kind) {
      case LayerKind::kGmrConv:
        j["k"] = spec.k;
        j["n"] = spec.n;
        j["c_in"] = spec.c_in;
        j["c_out"] = spec.c_out;
        break;
      case LayerKind::kDenseConv:
        j["k"] = spec.k;
        j["c_in"] = spec.c_in;
        j["c_out"] = spec.c_out;
        break;
      case LayerKind::kAvgPoolDown:
        j["window"] = spec.window;
        j["c_in"] = spec.c_in;
        j["c_out"] = spec.c_out;
        break;
      case LayerKind::kBias:
        j["channels"] = spec.channels;
        break;
      case LayerKind::kLinear:
        j["c_in"] = spec.c_in;
        j["c_out"] = spec.c_out;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  write_json_header(out, json{{"version", 1},
                              {"classes", net.classes},
                              {"input_channels", net.input_channels},
                              {"layers", layers}});

  for (size_t li = 0; li < net.specs.size(); ++li) {
    const LayerSpec& spec = net.specs[li];
    const LayerParams& p = net.params[li];
    switch (spec.kind) {
      case LayerKind::kGmrConv:
        write_gmr(out, p.gmr, spec.c_in, spec.c_out);
        break;
      case LayerKind::kDenseConv:
      case LayerKind::kAvgPoolDown:
        write_dense_block(out, p.dense);
        break;
      case LayerKind::kBias:
        write_bias_block(out, p.bias);
        break;
      case LayerKind::kLinear: {
        write_magic(out, kLinearMagic);
        write_json_header(out, json{{"c_out", p.lin_w.dim(0)}, {"c_in", p.lin_w.dim(1)}});
        write_f64(out, p.lin_w.data(), static_cast<size_t>(p.lin_w.numel()));
        write_f64(out, p.bias.data(), p.bias.size());
        break;
      }
      default:
        break;
    }
  }
  if (!out) throw std::runtime_error("save_network: write failed for " + path);
}

Network load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_network: cannot open " + path);
  expect_magic(in, kNetMagic, "network file");
  const json header = read_json_header(in, "network file");

  Network net;
  net.classes = header.at("classes").get<int>();
  net.input_channels = header.at("input_channels").get<int>();
  for (const auto& j : header.at("layers")) {
    LayerSpec spec;
    spec.kind = kind_from_name(j.at("kind").get<std::string>());
    switch (spec.kind) {
      case LayerKind::kGmrConv:
        spec.k = j.at("k").get<int>();
        spec.n = j.at("n").get<int>();
        spec.c_in = j.at("c_in").get<int>();
        spec.c_out = j.at("c_out").get<int>();
        break;
      case LayerKind::kDenseConv:
        spec.k = j.at("k").get<int>();
        spec.c_in = j.at("c_in").get<int>();
        spec.c_out = j.at("c_out").get<int>();
        break;
      case LayerKind::kAvgPoolDown:
        spec.window = j.at("window").get<int>();
        spec.c_in = j.at("c_in").get<int>();
        spec.c_out = j.at("c_out").get<int>();
        spec.k = 1;
        break;
      case LayerKind::kBias:
        spec.channels = j.at("channels").get<int>();
        break;
      case LayerKind::kLinear:
        spec.c_in = j.at("c_in").get<int>();
        spec.c_out = j.at("c_out").get<int>();
        break;
      default:
        break;
    }
    net.specs.push_back(spec);
  }

  for (const auto& spec : net.specs) {
    LayerParams p;
    switch (spec.kind) {
      case LayerKind::kGmrConv: {
        p.gmr = read_gmr(in);
        if (p.gmr.geometry.k != spec.k || p.gmr.geometry.n != spec.n ||
            p.gmr.weights.c_in != spec.c_in || p.gmr.weights.c_out != spec.c_out) {
          throw std::runtime_error("network file: gmr block disagrees with manifest");
        }
        break;
      }
      case LayerKind::kDenseConv:
      case LayerKind::kAvgPoolDown: {
        p.dense = read_dense_block(in);
        if (p.dense.dim(0) != spec.c_out || p.dense.dim(1) != spec.c_in) {
          throw std::runtime_error("network file: dense block disagrees with manifest");
        }
        break;
      }
      case LayerKind::kBias:
        p.bias = read_bias_block(in);
        if (static_cast<int>(p.bias.size()) != spec.channels) {
          throw std::runtime_error("network file: bias block disagrees with manifest");
        }
        break;
      case LayerKind::kLinear: {
        expect_magic(in, kLinearMagic, "linear block");
        const json h = read_json_header(in, "linear block");
        const int64_t c_out = h.at("c_out").get<int64_t>();
        const int64_t c_in = h.at("c_in").get<int64_t>();
        if (c_out != spec.c_out || c_in != spec.c_in) {
          throw std::runtime_error("network file: linear block disagrees with manifest");
        }
        p.lin_w = Tensor<double>(Shape{c_out, c_in});
        p.bias.resize(static_cast<size_t>(c_out));
        read_f64(in, p.lin_w.data(), static_cast<size_t>(p.lin_w.numel()), "linear block");
        read_f64(in, p.bias.data(), p.bias.size(), "linear block");
        break;
      }
      default:
        break;
    }
    net.params.push_back(std::move(p));
  }
  validate_network(net);
  return net;
}

}  // namespace gmr
