#pragma once

#include <iosfwd>
#include <string>

#include "gmr/kernel.hpp"
#include "gmr/net.hpp"

namespace gmr {

// ".gmr" kernel parameter file: 8-byte magic "GMRCONV1", a little-endian
// uint32 length-prefixed UTF-8 JSON header {dims, k, n, c_in, c_out,
// clip:[0.01, 2n]}, then little-endian float64 payload: ring weights in
// (c_out, c_in, n) row-major order followed by the n log_sigma values.
// Readers reject unknown magic and inconsistent extents.
void write_gmr(std::ostream& out, const GmrLayerParams& p, int c_in, int c_out);
GmrLayerParams read_gmr(std::istream& in);

void save_gmr(const std::string& path, const GmrLayerParams& p);
GmrLayerParams load_gmr(const std::string& path);

// Dataset cache: magic "GMRDSET1", JSON header {version, count, height,
// width, classes}, float64 images, int32 labels.
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

// Network container: magic "GMRNET01", JSON layer manifest, then one
// parameter block per layer in order; GMR layers embed complete ".gmr"
// blocks, dense layers use "GMRDENS1" blocks, biases "GMRBIAS1", the head
// "GMRLIN01".
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

}  // namespace gmr
