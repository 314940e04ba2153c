#pragma once

// Construction of ReLU networks: parity chains, linear combinations, exact
// predicate compilation, composition with complexity accounting, the clamp
// h_xi, and leaky-ReLU conversion.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "forge/error.hpp"
#include "forge/fixed_scalar.hpp"
#include "forge/linalg.hpp"
#include "forge/predicate.hpp"
#include "forge/relu_net.hpp"

namespace forge {

// Product of the given coordinates (0-based, within [0, k)) on {+-1}^k.
// x_a x_b = |x_a + x_b| - |x_b| for +-1 inputs, and |z| = phi(z) + phi(-z);
// the running product and the not-yet-used coordinates are carried forward.
inline ReluNet compile_parity(std::vector<unsigned> subset, unsigned k) {
  detail::require(!subset.empty(), "parity subset must be nonempty");
  std::sort(subset.begin(), subset.end());
  detail::require(std::adjacent_find(subset.begin(), subset.end()) == subset.end(), "parity subset has repeated indices");
  detail::require(subset.back() < k, "parity subset index out of range");
  const std::size_t s = subset.size();
  const FixedScalar one(1);
  const FixedScalar minus_one(-1);
  if (s == 1) {
    return ReluNet({Layer{SparseMatrix::from_triplets(1, k, {{0, subset[0], one}}), FixedVector(1)}});
  }
  std::vector<Layer> layers;
  // Hidden layer 1: product block for (a1, a2) then carries for a3..as.
  {
    std::vector<Triplet> t;
    const unsigned a = subset[0];
    const unsigned b = subset[1];
    t.push_back({0, a, one});
    t.push_back({0, b, one});
    t.push_back({1, a, minus_one});
    t.push_back({1, b, minus_one});
    t.push_back({2, b, one});
    t.push_back({3, b, minus_one});
    std::size_t row = 4;
    for (std::size_t j = 2; j < s; ++j) {
      t.push_back({row++, subset[j], one});
      t.push_back({row++, subset[j], minus_one});
    }
    layers.push_back(Layer{SparseMatrix::from_triplets(row, k, std::move(t)), FixedVector(row)});
  }
  // Hidden layers 2..s-1. Previous layer: product block rows 0..3, carries in pairs after.
  for (std::size_t j = 2; j < s; ++j) {
    const std::size_t prev_rows = layers.back().weight.rows();
    const std::size_t carries_left = s - j - 1;
    const std::size_t rows = 4 + 2 * carries_left;
    std::vector<Triplet> t;
    // p = h0 + h1 - h2 - h3, x_b = h4 - h5.
    const FixedScalar p_coeffs[4] = {one, one, minus_one, minus_one};
    for (std::size_t c = 0; c < 4; ++c) {
      t.push_back({0, c, p_coeffs[c]});
      t.push_back({1, c, -p_coeffs[c]});
    }
    t.push_back({0, 4, one});
    t.push_back({0, 5, minus_one});
    t.push_back({1, 4, minus_one});
    t.push_back({1, 5, one});
    t.push_back({2, 4, one});
    t.push_back({2, 5, minus_one});
    t.push_back({3, 4, minus_one});
    t.push_back({3, 5, one});
    for (std::size_t c = 0; c < carries_left; ++c) {
      t.push_back({4 + 2 * c, 6 + 2 * c, one});
      t.push_back({5 + 2 * c, 7 + 2 * c, one});
    }
    layers.push_back(Layer{SparseMatrix::from_triplets(rows, prev_rows, std::move(t)), FixedVector(rows)});
  }
  layers.push_back(Layer{SparseMatrix::from_triplets(1, 4, {{0, 0, one}, {0, 1, one}, {0, 2, minus_one}, {0, 3, minus_one}}),
                         FixedVector(1)});
  return ReluNet(std::move(layers));
}

// Size of the parity chain on s coordinates.
inline std::size_t parity_chain_size(std::size_t s) { return s <= 1 ? 0 : 4 * (s - 1) + (s - 1) * (s - 2); }

// Extends a network to `depth` layers without changing its function, Lipschitz
// claim or bit complexity: y = phi(y) - phi(-y), carried through identities.
inline ReluNet pad_depth(const ReluNet& net, std::size_t depth) {
  detail::require(depth >= net.depth(), "cannot pad to a smaller depth");
  if (depth == net.depth()) return net;
  auto layers = net.layers();
  const std::size_t d = net.d_out();
  Layer last = layers.back();
  layers.pop_back();
  const SparseMatrix neg = last.weight.scaled(FixedScalar(-1));
  FixedVector bias = last.bias;
  for (const auto& b : last.bias) bias.push_back(-b);
  layers.push_back(Layer{vstack({&last.weight, &neg}), bias});
  for (std::size_t i = net.depth() + 1; i < depth; ++i) layers.push_back(Layer{SparseMatrix::identity(2 * d), FixedVector(2 * d)});
  const SparseMatrix id = SparseMatrix::identity(d);
  const SparseMatrix neg_id = SparseMatrix::identity(d, FixedScalar(-1));
  layers.push_back(Layer{hstack({&id, &neg_id}), FixedVector(d)});
  return ReluNet(std::move(layers), {.lambda = net.profile().lambda, .tau = net.profile().tau});
}

// Scales layer i by 2^{e_i} with sum e_i = 0 so that layer norms are roughly
// equal; biases absorb the cumulative factor, so the function is unchanged.
inline ReluNet rebalance(const ReluNet& net) {
  const auto norms = net.layer_norms();
  const std::size_t L = norms.size();
  if (L <= 1) return net;
  for (double n : norms) {
    if (n <= 0.0) return net;
  }
  double log_mean = 0.0;
  for (double n : norms) log_mean += std::log2(n);
  log_mean /= static_cast<double>(L);
  std::vector<int> e(L);
  int total = 0;
  for (std::size_t i = 0; i < L; ++i) {
    e[i] = static_cast<int>(std::lround(log_mean - std::log2(norms[i])));
    total += e[i];
  }
  // Push the residual onto the last layers one unit at a time.
  for (std::size_t i = L - 1; total != 0; i = (i == 0 ? L - 1 : i - 1)) {
    const int step = total > 0 ? -1 : 1;
    e[i] += step;
    total += step;
  }
  auto layers = net.layers();
  int cumulative = 0;
  for (std::size_t i = 0; i < L; ++i) {
    cumulative += e[i];
    layers[i].weight = layers[i].weight.scaled(FixedScalar::pow2(e[i]));
    const FixedScalar factor = FixedScalar::pow2(cumulative);
    for (auto& b : layers[i].bias) b *= factor;
  }
  return ReluNet(std::move(layers), {.lambda = std::nullopt, .tau = std::nullopt});
}

// sum_i coeffs_i * nets_i(x). All nets share input dim, output dim and depth.
inline ReluNet linear_combine(const std::vector<ReluNet>& nets, const std::vector<FixedScalar>& coeffs) {
  detail::require(!nets.empty(), "linear_combine needs at least one network");
  detail::require(nets.size() == coeffs.size(), "one coefficient per network is required");
  const std::size_t d_in = nets.front().d_in();
  const std::size_t d_out = nets.front().d_out();
  const std::size_t L = nets.front().depth();
  for (const auto& n : nets) {
    detail::require(n.d_in() == d_in && n.d_out() == d_out, "linear_combine dimension mismatch");
    detail::require(n.depth() == L, "linear_combine depth mismatch; pad networks first");
  }
  double lambda_sum = 0.0;
  for (std::size_t i = 0; i < nets.size(); ++i) lambda_sum += std::abs(coeffs[i].to_double()) * nets[i].profile().lambda;

  FixedVector out_bias(d_out);
  for (std::size_t i = 0; i < nets.size(); ++i) {
    for (std::size_t o = 0; o < d_out; ++o) out_bias[o] += coeffs[i] * nets[i].layers().back().bias[o];
  }
  std::vector<Layer> layers;
  if (L == 1) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < nets.size(); ++i) {
      for (auto& e : nets[i].layers()[0].weight.triplets()) t.push_back({e.row, e.col, coeffs[i] * e.value});
    }
    layers.push_back(Layer{SparseMatrix::from_triplets(d_out, d_in, std::move(t)), out_bias});
  } else {
    for (std::size_t li = 0; li + 1 < L; ++li) {
      std::vector<const SparseMatrix*> parts;
      FixedVector bias;
      for (const auto& n : nets) {
        parts.push_back(&n.layers()[li].weight);
        bias.insert(bias.end(), n.layers()[li].bias.begin(), n.layers()[li].bias.end());
      }
      layers.push_back(Layer{li == 0 ? vstack(parts) : block_diag(parts), std::move(bias)});
    }
    std::vector<SparseMatrix> scaled;
    scaled.reserve(nets.size());
    for (std::size_t i = 0; i < nets.size(); ++i) scaled.push_back(nets[i].layers().back().weight.scaled(coeffs[i]));
    std::vector<const SparseMatrix*> parts;
    for (const auto& m : scaled) parts.push_back(&m);
    layers.push_back(Layer{hstack(parts), out_bias});
  }
  ReluNet combined(std::move(layers));
  if (lambda_sum < combined.profile().lambda) {
    return ReluNet(combined.layers(), {.lambda = lambda_sum, .tau = std::nullopt});
  }
  return combined;
}

// Exact network for P on {+-1}^k: depth k, built from its Fourier expansion.
inline ReluNet compile_predicate(const Predicate& p) {
  detail::require(p.k() <= kMaxPredicateArity, "predicate arity exceeds the cap");
  const unsigned k = p.k();
  const FourierExpansion f = fourier_transform(p);
  const FixedScalar constant = f.coefficient(0);
  std::vector<ReluNet> terms;
  std::vector<FixedScalar> coeffs;
  for (const auto& [mask, c] : f.coeffs()) {
    if (mask == 0) continue;
    std::vector<unsigned> subset;
    for (unsigned i = 0; i < k; ++i) {
      if (mask & (1u << i)) subset.push_back(i);
    }
    terms.push_back(rebalance(pad_depth(compile_parity(subset, k), k)));
    coeffs.push_back(c);
  }
  if (terms.empty()) {
    return ReluNet({Layer{SparseMatrix(1, k), FixedVector{constant}}}, {.lambda = 0.0, .tau = std::nullopt});
  }
  ReluNet combined = linear_combine(terms, coeffs);
  auto layers = combined.layers();
  layers.back().bias[0] += constant;
  return ReluNet(std::move(layers), {.lambda = combined.profile().lambda, .tau = std::nullopt});
}

// Replaces the input of `net` (over R^{indices.size()}) by the given coordinates of R^m.
inline ReluNet select_inputs(const ReluNet& net, const std::vector<std::size_t>& indices, std::size_t m) {
  detail::require(indices.size() == net.d_in(), "selection length must equal network input dimension");
  for (auto i : indices) detail::require(i < m, "selected coordinate out of range");
  auto layers = net.layers();
  std::vector<Triplet> t;
  for (auto& e : layers.front().weight.triplets()) t.push_back({e.row, indices[e.col], e.value});
  layers.front().weight = SparseMatrix::from_triplets(layers.front().weight.rows(), m, std::move(t));
  return ReluNet(std::move(layers), {.lambda = net.profile().lambda, .tau = net.profile().tau});
}

// Adds inert zero units to the first hidden layer until the size is `size`.
inline ReluNet pad_size(const ReluNet& net, std::size_t size) {
  detail::require(size >= net.profile().S, "cannot pad to a smaller size");
  if (size == net.profile().S) return net;
  detail::require(net.depth() >= 2, "a depth-1 network has no hidden layer to pad");
  auto layers = net.layers();
  const std::size_t extra = size - net.profile().S;
  const std::size_t rows = layers[0].weight.rows() + extra;
  layers[0].weight = SparseMatrix::from_triplets(rows, layers[0].weight.cols(), layers[0].weight.triplets());
  layers[0].bias.resize(rows);
  layers[1].weight = SparseMatrix::from_triplets(layers[1].weight.rows(), rows, layers[1].weight.triplets());
  return ReluNet(std::move(layers), {.lambda = net.profile().lambda, .tau = net.profile().tau});
}

struct ComposeOptions {
  // Domain of the inner networks' input; defaults to [-1, 1]^s.
  std::optional<std::vector<Interval>> input_box;
  // Known ranges of the inner outputs over the whole input space; overrides the box.
  std::optional<std::vector<Interval>> inner_ranges;
};

struct ComposeReport {
  std::size_t r = 0;
  std::size_t L1 = 0;
  std::size_t S1 = 0;
  std::size_t L2 = 0;
  std::size_t S2 = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  unsigned tau1 = 0;
  unsigned tau2 = 0;
  std::vector<FixedScalar> shifts;
};

// outer(inner_1(x), ..., inner_r(x)). The r inner outputs become a hidden
// layer, so each is shifted by a non-negative integer c_j making it
// non-negative on the domain; the outer first-layer bias absorbs -W c.
inline ReluNet compose(const std::vector<ReluNet>& inner, const ReluNet& outer, const ComposeOptions& options = {},
                       ComposeReport* report = nullptr) {
  detail::require(!inner.empty(), "compose needs at least one inner network");
  const std::size_t r = inner.size();
  const std::size_t s = inner.front().d_in();
  for (const auto& n : inner) {
    detail::require(n.d_in() == s, "inner networks must share the input dimension");
    detail::require(n.d_out() == 1, "inner networks must have one output");
  }
  detail::require(outer.d_in() == r, "outer input dimension " + std::to_string(outer.d_in()) + " does not match " +
                                         std::to_string(r) + " inner networks");
  std::size_t L1 = 0;
  for (const auto& n : inner) L1 = std::max(L1, n.depth());
  std::vector<ReluNet> padded;
  padded.reserve(r);
  for (const auto& n : inner) padded.push_back(pad_depth(n, L1));
  std::size_t S1 = 0;
  for (const auto& n : padded) S1 = std::max(S1, n.profile().S);
  for (auto& n : padded) n = pad_size(n, S1);

  std::vector<FixedScalar> shifts(r);
  if (options.inner_ranges) {
    detail::require(options.inner_ranges->size() == r, "one inner range per inner network is required");
  }
  const auto box = options.input_box.value_or(unit_box(s));
  for (std::size_t j = 0; j < r; ++j) {
    const FixedScalar lo = options.inner_ranges ? (*options.inner_ranges)[j].lo : padded[j].output_bounds(box)[0].lo;
    if (lo.sign() < 0) {
      // Smallest integer >= -lo.
      const FixedScalar neg = -lo;
      BigInt ceil_value = neg.mantissa() >> neg.tau();
      if ((ceil_value << neg.tau()) != neg.mantissa()) ceil_value += 1;
      shifts[j] = FixedScalar::from_mantissa(ceil_value, 0);
    }
  }

  std::vector<Layer> layers;
  for (std::size_t li = 0; li < L1; ++li) {
    std::vector<const SparseMatrix*> parts;
    FixedVector bias;
    for (const auto& n : padded) {
      parts.push_back(&n.layers()[li].weight);
      bias.insert(bias.end(), n.layers()[li].bias.begin(), n.layers()[li].bias.end());
    }
    if (li + 1 == L1) {
      for (std::size_t j = 0; j < r; ++j) bias[j] += shifts[j];
    }
    layers.push_back(Layer{li == 0 ? vstack(parts) : block_diag(parts), std::move(bias)});
  }
  auto outer_layers = outer.layers();
  {
    auto& first = outer_layers.front();
    for (const auto& e : first.weight.triplets()) first.bias[e.row] -= e.value * shifts[e.col];
  }
  for (auto& l : outer_layers) layers.push_back(std::move(l));

  double lambda1 = 0.0;
  unsigned tau1 = 0;
  for (const auto& n : inner) {
    lambda1 = std::max(lambda1, n.profile().lambda);
    tau1 = std::max(tau1, n.profile().tau);
  }
  const double lambda = lambda1 * outer.profile().lambda * std::sqrt(static_cast<double>(r));
  if (report) {
    *report = ComposeReport{r, L1, S1, outer.depth(), outer.profile().S, lambda1, outer.profile().lambda, tau1, outer.profile().tau, shifts};
  }
  return ReluNet(std::move(layers), {.lambda = lambda, .tau = std::max(tau1, outer.profile().tau)});
}

// Runs the given networks side by side on disjoint input blocks.
inline ReluNet parallel(const std::vector<ReluNet>& nets) {
  detail::require(!nets.empty(), "parallel needs at least one network");
  const std::size_t L = nets.front().depth();
  double lambda = 0.0;
  for (const auto& n : nets) {
    detail::require(n.depth() == L, "parallel networks must share depth");
    lambda = std::max(lambda, n.profile().lambda);
  }
  std::vector<Layer> layers;
  for (std::size_t li = 0; li < L; ++li) {
    std::vector<const SparseMatrix*> parts;
    FixedVector bias;
    for (const auto& n : nets) {
      parts.push_back(&n.layers()[li].weight);
      bias.insert(bias.end(), n.layers()[li].bias.begin(), n.layers()[li].bias.end());
    }
    layers.push_back(Layer{block_diag(parts), std::move(bias)});
  }
  return ReluNet(std::move(layers), {.lambda = lambda, .tau = std::nullopt});
}

// h_xi(x) = phi(x/xi + 1) - phi(x/xi - 1) - 1 with xi = 1/q.
inline ReluNet clamp_net(const BigInt& q) {
  detail::require(q >= 1, "clamp slope must be a positive integer");
  const FixedScalar slope = FixedScalar::from_mantissa(q, 0);
  Layer first{SparseMatrix::from_triplets(2, 1, {{0, 0, slope}, {1, 0, slope}}), FixedVector{FixedScalar(1), FixedScalar(-1)}};
  Layer second{SparseMatrix::from_triplets(1, 2, {{0, 0, FixedScalar(1)}, {0, 1, FixedScalar(-1)}}), FixedVector{FixedScalar(-1)}};
  return ReluNet({first, second}, {.lambda = slope.to_double(), .tau = std::nullopt});
}

// Accepts xi only when it is the reciprocal of an integer.
inline ReluNet clamp_net_from_xi(double xi) {
  detail::require(xi > 0.0 && xi <= 1.0 && std::isfinite(xi), "xi must lie in (0, 1]");
  const double q = std::round(1.0 / xi);
  detail::require(std::abs(1.0 / q - xi) <= 1e-15 * xi && q < 9.007199254740992e15, "xi must be the reciprocal of an integer");
  return clamp_net(BigInt(static_cast<long long>(q)));
}

inline double h_xi(double x, double xi) {
  if (x >= xi) return 1.0;
  if (x <= -xi) return -1.0;
  return x / xi;
}

// Entrywise h_xi on R^m.
inline ReluNet entrywise_clamp(std::size_t m, const BigInt& q) {
  return parallel(std::vector<ReluNet>(m, clamp_net(q)));
}

// psi(z) = (1 - leak) phi(z) - leak phi(-z).
inline double leaky(double z, double leak) { return z >= 0.0 ? (1.0 - leak) * z : leak * z; }

// W_L psi(... psi(W_1 x)) as a ReLU network: each hidden layer holds phi(z) and phi(-z).
inline ReluNet leaky_to_relu(const std::vector<SparseMatrix>& weights, const FixedScalar& leak) {
  detail::require(!weights.empty(), "leaky network needs at least one weight matrix");
  detail::require(leak.sign() > 0 && leak <= FixedScalar::pow2(-1), "leak must lie in (0, 1/2]");
  for (std::size_t i = 1; i < weights.size(); ++i) {
    detail::require(weights[i].cols() == weights[i - 1].rows(), "leaky weight dims do not chain");
  }
  double lambda = 1.0;
  for (const auto& w : weights) lambda *= operator_norm_bound(w);
  lambda *= std::pow(1.0 - leak.to_double(), static_cast<double>(weights.size() - 1));

  std::vector<Layer> layers;
  auto split = [&](std::size_t k) {
    const SparseMatrix pos = SparseMatrix::identity(k, FixedScalar(1) - leak);
    const SparseMatrix neg = SparseMatrix::identity(k, -leak);
    return hstack({&pos, &neg});
  };
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const SparseMatrix m = i == 0 ? weights[0] : multiply(weights[i], split(weights[i - 1].rows()));
    if (i + 1 == weights.size()) {
      layers.push_back(Layer{m, FixedVector(m.rows())});
    } else {
      const SparseMatrix neg = m.scaled(FixedScalar(-1));
      layers.push_back(Layer{vstack({&m, &neg}), FixedVector(2 * m.rows())});
    }
  }
  return ReluNet(std::move(layers), {.lambda = lambda, .tau = std::nullopt});
}

}  // namespace forge
