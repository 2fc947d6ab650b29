#include "crl/prng.hpp"

#include <cmath>
#include <cstring>

namespace crl {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const void* bytes, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

PrngStream PrngStream::substream(std::uint64_t tag) const {
  return PrngStream{seed, mix64(stream_id ^ mix64(tag)), 0};
}

namespace {

inline std::uint64_t next_word(PrngStream& s) {
  return mix64(mix64(mix64(s.seed) ^ s.stream_id) ^ s.counter++);
}

}  // namespace

double draw_uniform01(PrngStream& s) {
  return static_cast<double>(next_word(s) >> 11) * 0x1.0p-53;
}

double draw_standard_normal(PrngStream& s) {
  // Box-Muller; two words per value keeps the counter advance fixed.
  const double u1 = (static_cast<double>(next_word(s) >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(next_word(s) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t draw_index(PrngStream& s, std::uint64_t n) {
  return n == 0 ? 0 : next_word(s) % n;
}

Tensor prng_draw(PrngStream& s, DrawKind kind, const Shape& shape) {
  const std::size_t n = static_cast<std::size_t>(numel(shape));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = kind == DrawKind::kUniform01 ? draw_uniform01(s) : draw_standard_normal(s);
  return Tensor(shape, std::move(v));
}

std::vector<double> draw_normal_vec(PrngStream& s, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = draw_standard_normal(s);
  return v;
}

std::vector<double> draw_uniform_vec(PrngStream& s, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = draw_uniform01(s);
  return v;
}

}  // namespace crl
