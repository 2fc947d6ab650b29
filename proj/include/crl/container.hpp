#pragma once

// On-disk container shared by datasets and checkpoints.
//
// Layout (little-endian):
//   magic "CRL1" | format version u32 | header length u32 | JSON header |
//   raw float64 payload for each array, in header order.
//
// The header declares array names/shapes plus free-form metadata and an
// FNV-1a hash of the payload bytes; loading verifies magic, version and
// hash, so truncation and corruption surface as errors instead of bad data.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crl/tensor.hpp"

namespace crl {

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContainerCorruptError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContainerVersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Container {
  std::string kind;      // "dataset", "checkpoint", ...
  nlohmann::json meta;   // free-form; spec hash, seed, dims, counts
  std::vector<NamedArray> arrays;
};

// Writes to a temp file in the target directory, then renames over `path`.
void save_container(const std::string& path, const Container& c);
Container load_container(const std::string& path);

// Atomic small-text write with the same temp-file strategy.
void atomic_write_text(const std::string& path, const std::string& text);

}  // namespace crl
