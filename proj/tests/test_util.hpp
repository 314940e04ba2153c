#pragma once

#include <cstdint>
#include <vector>

#include "forge/fixed_scalar.hpp"
#include "forge/relu_net.hpp"
#include "forge/rng.hpp"

namespace forge::testing {

inline FixedScalar dyadic(long long mantissa, unsigned tau) { return FixedScalar::from_mantissa(BigInt(mantissa), tau); }

// All points of {+-1}^k in table-index order.
inline std::vector<std::vector<int>> cube(unsigned k) {
  std::vector<std::vector<int>> out;
  for (std::uint32_t idx = 0; idx < (1u << k); ++idx) {
    std::vector<int> x(k);
    for (unsigned i = 0; i < k; ++i) x[i] = (idx >> i) & 1u ? -1 : 1;
    out.push_back(x);
  }
  return out;
}

inline FixedVector fixed_point(const std::vector<int>& x) {
  FixedVector out;
  for (int v : x) out.emplace_back(v);
  return out;
}

inline std::vector<double> double_point(const std::vector<int>& x) { return std::vector<double>(x.begin(), x.end()); }

// Random net with entries that are multiples of 2^-frac_bits in [-range, range].
inline ReluNet random_net(const std::vector<std::size_t>& widths, unsigned frac_bits, long long range, Rng& rng) {
  std::vector<Layer> layers;
  const long long span = range << frac_bits;
  auto draw = [&] {
    return FixedScalar::from_mantissa(BigInt(static_cast<long long>(rng.uniform_below(static_cast<std::uint64_t>(2 * span + 1))) - span),
                                      frac_bits);
  };
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    std::vector<FixedScalar> w(widths[i + 1] * widths[i]);
    for (auto& v : w) v = draw();
    FixedVector b(widths[i + 1]);
    for (auto& v : b) v = draw();
    layers.push_back(make_layer(widths[i + 1], widths[i], w, b));
  }
  return ReluNet(std::move(layers));
}

}  // namespace forge::testing
