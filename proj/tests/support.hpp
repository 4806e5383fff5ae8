#pragma once

#include <random>

#include "sdfas/netgraph.hpp"

namespace sdfas::testing {

inline Tensor random_image(std::size_t c, std::size_t s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({c, s, s});
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline NetInputs random_inputs(std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NetInputs in;
  for (auto m : kAllModalities) {
    const auto c = modality_channels(m);
    auto s = random_image(c, size, rng);
    in[m] = {std::move(s), random_image(c, size, rng)};
  }
  return in;
}

// He-scaled kernels plus random heads and slightly positive biases, so that
// small maps keep most ReLUs alive and every head carries gradient.
inline void randomize(Network& net, std::uint64_t seed) {
  net.init_parameters(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& p : net.graph().parameters()) {
    if (p.value.rank() == 4) continue;
    const bool bias = p.value.rank() == 1;
    for (auto& v : p.value.data()) v = bias ? 0.1 + 0.1 * n(rng) : 0.5 * n(rng);
  }
}

}  // namespace sdfas::testing
