#include "undomap/rng.hpp"

#include <cmath>

namespace undomap {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t counter) {
  return splitmix64(splitmix64(master ^ fnv1a64(stream)) + counter);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

int Rng::categorical(const double* probs, int n) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += probs[i];
  double u = uniform() * total;
  for (int i = 0; i < n; ++i) {
    u -= probs[i];
    if (u < 0.0) return i;
  }
  return n - 1;
}

}  // namespace undomap
