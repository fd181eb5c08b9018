#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "holefill/tensor.hpp"

namespace holefill {

using Rng = std::mt19937_64;

// Independent stream keyed by a base seed and a tuple of stream ids.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {});

Tensor normal_tensor(const Shape& shape, double stddev, Rng& rng);
Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng);
double uniform01(Rng& rng);

}  // namespace holefill
