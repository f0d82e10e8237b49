#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace cankd {

// Deterministic splitmix64 generator. The stdlib distributions are
// implementation-defined, so all draws are produced here directly;
// identical seeds give identical streams on every platform.
//
// Streams are split hierarchically from the construction seed (not from the
// evolving state), so sibling streams never perturb each other no matter how
// many values each one consumes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : root_(seed), state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller (no rejection, fixed draw count).
  double normal();

  // Child stream keyed by an integer or a name. Independent of draws made
  // on this stream so far.
  Rng split(std::uint64_t stream) const { return Rng(derive(stream)); }
  Rng split(std::string_view name) const;

  // Derived seed value for handing to pure functions of a seed.
  std::uint64_t derive(std::uint64_t stream) const;
  std::uint64_t derive(std::string_view name) const;

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::int64_t i = static_cast<std::int64_t>(items.size()) - 1; i > 0; --i) {
      std::swap(items[static_cast<std::size_t>(i)],
                items[static_cast<std::size_t>(uniform_int(0, i))]);
    }
  }

 private:
  std::uint64_t root_;
  std::uint64_t state_;
};

}  // namespace cankd
