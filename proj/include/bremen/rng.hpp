#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "bremen/tensor.hpp"

namespace bremen {

/// Child seed for a named stream. Pure function of its inputs so that
/// per-worker streams do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n);
  /// In-place Fisher-Yates shuffle.
  void shuffle(std::vector<std::size_t>& items);

  Vector uniform_vector(Eigen::Index n, double lo, double hi);
  Vector normal_vector(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace bremen
