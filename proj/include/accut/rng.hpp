#pragma once

#include <algorithm>
#include <cmath>
#include <random>

namespace accut {

// Uniform/gaussian draws built on raw mt19937_64 words so values are
// identical across standard-library implementations.
inline double rng_uniform(std::mt19937_64& eng) {
  return double(eng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

inline double rng_uniform(std::mt19937_64& eng, double lo, double hi) {
  return lo + (hi - lo) * rng_uniform(eng);
}

inline int rng_uniform_int(std::mt19937_64& eng, int lo, int hi) {  // inclusive
  return std::min(hi, lo + int(rng_uniform(eng) * double(hi - lo + 1)));
}

inline bool rng_bernoulli(std::mt19937_64& eng, double p) {
  return rng_uniform(eng) < p;
}

class GaussianDraw {
 public:
  double operator()(std::mt19937_64& eng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    constexpr double kTwoPi = 6.28318530717958647692;
    double u1 = std::max(rng_uniform(eng), 1e-300);
    double u2 = rng_uniform(eng);
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

 private:
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace accut
