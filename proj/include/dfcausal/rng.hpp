#pragma once

#include <cstdint>
#include <random>

namespace dfc {

/// Seeded generator with a fixed, platform independent algorithm.
///
/// The engine is std::mt19937_64, whose output sequence is pinned by the C++
/// standard. The standard distributions are implementation defined, so the
/// transforms are done here: uniforms take the top 53 bits, normals use the
/// Box-Muller transform (the second variate of each pair is cached), and
/// bounded integers use Lemire's multiply-shift method with rejection.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal variate.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derives an independent stream seed from a master seed (splitmix64 mixing).
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace dfc
