#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace oci {

/// Deterministic RNG used everywhere randomness is needed. Wraps the
/// standardized mt19937_64 engine but maps raw bits to doubles/ints with
/// fixed arithmetic, so sequences are identical across compilers and
/// standard libraries (std::uniform_real_distribution is not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n) {
    // multiply-high mapping, bias is negligible for the small n used here
    return static_cast<int>((static_cast<unsigned __int128>(gen_()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Derives an independent stream seed from a base seed and a tag.
inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return detail::splitmix64(seed ^ detail::splitmix64(h));
}

inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  return detail::splitmix64(seed ^ detail::splitmix64(salt));
}

inline uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t salt) {
  return mix_seed(mix_seed(seed, tag), salt);
}

}  // namespace oci
