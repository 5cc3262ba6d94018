#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mtpp {

// mt19937_64 engine with hand-rolled scalar transforms. std::*_distribution
// output is implementation defined, these are not, so seeded streams stay
// byte-stable across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no cached spare.
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double exponential(double rate) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(u) / rate;
  }

  // Uniform integer on [0, n).
  uint64_t integer(uint64_t n) {
    // Rejection-free modulo is biased for huge n; n here is tiny (indices).
    return eng_() % n;
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(integer(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mtpp
