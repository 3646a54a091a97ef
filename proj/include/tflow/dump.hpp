#pragma once
#include <cstdint>
#include <string>

#include "tflow/flow.hpp"

namespace tflow {

// Binary kernel container: magic "TFLK", a u32 format version, the snapshot
// header (theta, reservoir temperatures, time axis) and the little-endian f64
// planes of sigma, the per-reservoir current kernels and the propagator.
// Round trips are bit exact. Malformed or truncated files raise FormatError.
void write_kernel_file(const std::string& path, const Snapshot& s);
Snapshot read_kernel_file(const std::string& path);

// FNV-1a 64-bit hash; used for the config fingerprint in run manifests.
std::uint64_t fnv1a64(const std::string& data);

}  // namespace tflow
