#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace undomap {

// All randomness in the project flows from one master seed through named
// substreams.  The derivation scheme is:
//
//     seed(master, stream, k) = splitmix64(splitmix64(master ^ fnv1a64(stream)) + k)
//
// so any component (source training, rollouts, potential init, demos, ...)
// can be re-run in isolation and reproduce its draws exactly.
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t counter = 0);

// mt19937_64 with hand-rolled distributions.  The engine is fully specified
// by the standard; the std:: distribution adaptors are not, so we avoid them
// to keep draws identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  /// Index sampled by inverse CDF; probs need not be exactly normalized.
  int categorical(const double* probs, int n);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace undomap
