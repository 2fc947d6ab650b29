#pragma once

// Counter-based pseudo-randomness. Every draw is a pure function of
// (seed, stream_id, counter), so consumers holding disjoint stream ids
// never perturb each other and runs replay bit-exactly.

#include <cstdint>
#include <vector>

#include "crl/tensor.hpp"

namespace crl {

struct PrngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::uint64_t counter = 0;

  // Child stream with an independent id; does not advance this stream.
  PrngStream substream(std::uint64_t tag) const;
};

// SplitMix64 finalizer; bijective mixing of a 64-bit word.
std::uint64_t mix64(std::uint64_t x);

// Stable 64-bit hash of a byte string (FNV-1a).
std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);

double draw_uniform01(PrngStream& s);
double draw_standard_normal(PrngStream& s);
// Uniform in [0, n).
std::uint64_t draw_index(PrngStream& s, std::uint64_t n);

enum class DrawKind { kUniform01, kStandardNormal };

Tensor prng_draw(PrngStream& s, DrawKind kind, const Shape& shape);

std::vector<double> draw_normal_vec(PrngStream& s, std::size_t n);
std::vector<double> draw_uniform_vec(PrngStream& s, std::size_t n);

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(PrngStream& s, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(draw_index(s, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace crl
