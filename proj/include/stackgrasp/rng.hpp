#pragma once

// Deterministic random source. std::mt19937_64 gives a portable bit stream;
// the distribution helpers below are hand-rolled so sequences are identical
// across standard libraries, which keeps seeded artifacts byte-stable.

#include <cmath>
#include <cstdint>
#include <random>

namespace stackgrasp {

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller, one sample per call (the spare is discarded to keep the
  // consumed stream length independent of call parity)
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

  // derive an independent stream, e.g. per scene or per iteration
  Rng fork(uint64_t salt) {
    uint64_t s = gen_() ^ (salt * 0x9e3779b97f4a7c15ull + 0xbf58476d1ce4e5b9ull);
    return Rng(s);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace stackgrasp
