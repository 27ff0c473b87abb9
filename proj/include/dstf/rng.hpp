#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dstf {

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t splitmix64(std::uint64_t x);

// Seeded 64-bit generator. Streams derived with for_stream() are independent
// of creation order, so adding a parameter never shifts another's init.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng for_stream(std::uint64_t seed, std::string_view name) { return Rng(seed ^ fnv1a64(name)); }

  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dstf
