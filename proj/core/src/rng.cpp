#include "bpa/rng.hpp"

#include <cmath>
#include <numbers>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace bpa {

uint64_t Rng::below(uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  // Rejection sampling for an unbiased result.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<size_t> Rng::permutation(size_t n) {
  std::vector<size_t> p(n);
  for (size_t i = 0; i < n; ++i) p[i] = i;
  for (size_t i = n; i > 1; --i) {
    const size_t j = below(i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw std::runtime_error("corrupt RNG state");
}

EpochSampler::EpochSampler(size_t n, uint64_t seed) : rng_(seed) {
  if (n == 0) throw std::invalid_argument("EpochSampler over an empty set");
  order_ = rng_.permutation(n);
}

size_t EpochSampler::next() {
  if (cursor_ == order_.size()) {
    order_ = rng_.permutation(order_.size());
    cursor_ = 0;
    ++epoch_;
  }
  return order_[cursor_++];
}

std::string EpochSampler::state() const {
  std::ostringstream os;
  os << cursor_ << ' ' << epoch_ << ' ' << order_.size();
  for (size_t i : order_) os << ' ' << i;
  os << ' ' << rng_.state();
  return os.str();
}

void EpochSampler::restore(const std::string& state) {
  std::istringstream is(state);
  size_t n = 0;
  is >> cursor_ >> epoch_ >> n;
  if (is.fail() || n != order_.size()) throw std::runtime_error("sampler state does not match its population");
  for (auto& i : order_) is >> i;
  is.get();
  std::string rest((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (is.bad() || cursor_ > n) throw std::runtime_error("corrupt sampler state");
  rng_.restore(rest);
}

uint64_t derive_seed(uint64_t base, std::string_view tag) {
  // FNV-1a over the tag, mixed with the base through splitmix64.
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  uint64_t z = base ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace bpa
