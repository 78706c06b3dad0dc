#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace steerlab {

std::uint64_t splitmix64(std::uint64_t x);

// Stable 64-bit hash of a name, used to derive per-tensor and per-stage seeds.
std::uint64_t hash_name(std::string_view name);

// Derives a named sub-seed ("world", "init", "batching", ...) from a global seed.
std::uint64_t sub_seed(std::uint64_t seed, std::string_view name);

// Counter-based standard normal: a pure function of (key, counter).
double counter_normal(std::uint64_t key, std::uint64_t counter);

// Small sequential generator with a portable bounded draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  // Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double uniform();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in draw order.
  std::vector<int> sample_distinct(int n, int k);

 private:
  std::uint64_t state_;
};

}  // namespace steerlab
