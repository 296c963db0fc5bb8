#pragma once

#include <cstdint>
#include <random>

namespace spamtree {

/// Independent generator per (seed, a, b) triple. Streams owned by a graph
/// node are only advanced by that node, so draws do not depend on how nodes
/// are scheduled across threads.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    eng_.seed(seq);
  }

  double normal() { return normal_(eng_); }
  double uniform() { return uniform_(eng_); }
  double gamma(double shape, double scale) {
    std::gamma_distribution<double> g(shape, scale);
    return g(eng_);
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace spamtree
