#include "holefill/rng.hpp"

#include <vector>

namespace holefill {

Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto id : stream) {
    words.push_back(static_cast<std::uint32_t>(id));
    words.push_back(static_cast<std::uint32_t>(id >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng) {
  Tensor out(shape);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : out.values()) v = stddev * dist(rng);
  return out;
}

Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng) {
  Tensor out(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : out.values()) v = dist(rng);
  return out;
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace holefill
