#pragma once

#include <cstdint>
#include <random>

namespace xlight {

// Deterministic random stream. Distribution sampling is implemented here
// instead of through <random> distributions so that two runs with the same
// seed produce identical sequences on any standard library.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Knuth's algorithm; rates in this project are well below 1 per tick.
  int poisson(double mean);

  // standard normal via Box-Muller
  double normal();

  // derive an independent stream (e.g. one per flow or per scenario)
  Rng fork(std::uint64_t stream_id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
};

}  // namespace xlight
