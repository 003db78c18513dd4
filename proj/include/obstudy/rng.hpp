#pragma once

#include <cstdint>
#include <string_view>

namespace obstudy {

/// Counter-based splitmix64: draw k of a stream keyed by `key` is
/// mix64(key + (k + 1) * 0x9E3779B97F4A7C15). Uniforms take the top 53 bits;
/// normals use the Box-Muller pair (cosine branch first).
class Rng {
 public:
  static constexpr std::string_view kIdentity = "splitmix64/box-muller";

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on (0, 1), for logs.
  double uniform_open();
  double normal();
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t z);

/// Independent stream key for (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace obstudy
