#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace imgconf {

// splitmix64 finalizer; used for seed derivation, never as the generator.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed splitting rule: every stream in a run is keyed by
// (root seed, stream tag, index). A sweep gives replication k the index k,
// so any single replication can be regenerated in isolation.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ splitmix64(stream)) ^ index);
}

// Stream tags. Distinct arbitrary constants; listed here so the splitting
// rule is auditable in one place.
namespace stream {
inline constexpr std::uint64_t images = 0x1001;
inline constexpr std::uint64_t confounder = 0x1002;
inline constexpr std::uint64_t outcomes = 0x1003;
inline constexpr std::uint64_t model_init = 0x1004;
inline constexpr std::uint64_t training = 0x1005;
}  // namespace stream

// mt19937_64 with fully specified output mappings, so that streams are
// bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the second value of each pair is kept
  // as a spare for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = kTwoPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Modulo bias is < 2^-32 for the n used here.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace imgconf
