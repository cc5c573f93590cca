#include "rograd/common.hpp"

#include <cmath>

namespace rograd {

double Rng::normal() {
  // Box-Muller; u1 nudged away from zero so log() stays finite.
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

std::vector<std::size_t> Rng::permutation_prefix(std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  // Full Fisher-Yates so that the prefix for k is independent of k.
  shuffle(idx);
  if (k > n) k = n;
  idx.resize(k);
  return idx;
}

}  // namespace rograd
