#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace gdas {

std::uint64_t splitmix64(std::uint64_t x);

// Stable seed for a named subsystem: identical across runs and platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view subsystem);

// Folds a list of integers into one 64-bit key.
std::uint64_t hash_words(std::initializer_list<std::uint64_t> words);

// Counter-based uniform stream: draw(i) depends only on (key, i).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}
  std::uint64_t bits(std::uint64_t counter) const;
  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

// Sequential generator for initialization, shuffling and data synthesis.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Fisher-Yates over `below`, so the permutation does not depend on the
  // standard library.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gdas
