#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace bpa {

// Seeded 64-bit Mersenne Twister with portable transforms. The engine state is
// the whole state (no cached normals), so it can be captured in checkpoints.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller; consumes two draws per sample.
  double normal();

  // Fisher-Yates permutation of [0, n).
  std::vector<size_t> permutation(size_t n);

  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Cycles through [0, n) visiting every index once per epoch, reshuffled at
// each epoch boundary.
class EpochSampler {
 public:
  EpochSampler(size_t n, uint64_t seed);

  size_t next();
  size_t size() const { return order_.size(); }
  int64_t epoch() const { return epoch_; }

  std::string state() const;
  void restore(const std::string& state);

 private:
  Rng rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int64_t epoch_ = 0;
};

// Derives an independent stream seed from a base seed and a tag.
uint64_t derive_seed(uint64_t base, std::string_view tag);

}  // namespace bpa
