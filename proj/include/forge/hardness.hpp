#pragma once

// Range membership of a small PRG as an average-case-hard function. h(x) = +1
// iff x = G(y) for some seed y. Agreement of a classifier f with h is measured
// under the even mixture of U_d and G(U_m) and compared with
// 1/2 + eps/4 + 2^(m-d-1), where eps = |E f(G(U_m)) - E f(U_d)|.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/goldreich.hpp"
#include "forge/ltf_circuit.hpp"
#include "forge/parallel.hpp"
#include "forge/relu_net.hpp"
#include "forge/rng.hpp"

namespace forge {

// Points of {+-1}^d are packed with bit i set iff x_i = -1.
inline std::vector<int> unpack_point(std::uint64_t x, std::size_t d) {
  std::vector<int> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = (x >> i) & 1 ? -1 : 1;
  return out;
}

inline std::uint64_t pack_point(const std::vector<int>& x) {
  detail::require(x.size() <= 64, "packed points need d <= 64");
  std::uint64_t out = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    detail::require(x[i] == 1 || x[i] == -1, "point entries must be +1 or -1");
    if (x[i] < 0) out |= std::uint64_t{1} << i;
  }
  return out;
}

using Classifier = std::function<int(const std::vector<int>&)>;

inline Classifier classifier_from_circuit(LtfCircuit c) {
  return [c = std::move(c)](const std::vector<int>& x) { return c.eval(x); };
}

// sgn(net(x)) with sgn(0) = +1; the net must have a single output.
inline Classifier classifier_from_net(ReluNet net) {
  detail::require(net.d_out() == 1, "classifier net must have one output");
  return [net = std::move(net)](const std::vector<int>& x) {
    return net.eval_float(std::vector<double>(x.begin(), x.end()))[0] >= 0.0 ? 1 : -1;
  };
}

class HardFunction {
 public:
  static constexpr std::size_t max_m = 20;

  explicit HardFunction(LocalPrg prg) : prg_(std::move(prg)) {
    detail::require(prg_.m() <= max_m, "hard function enumeration needs m <= 20");
    detail::require(prg_.d() <= 64, "hard function needs d <= 64");
    const std::uint64_t seeds = std::uint64_t{1} << prg_.m();
    std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs(seeds);
    for (std::uint64_t y = 0; y < seeds; ++y) pairs[y] = {prg_.eval_packed(y)[0], y};
    std::sort(pairs.begin(), pairs.end());
    for (const auto& [x, y] : pairs) {
      if (!range_.empty() && range_.back() == x) continue;
      range_.push_back(x);
      witness_.push_back(y);
    }
  }

  const LocalPrg& prg() const { return prg_; }
  std::size_t m() const { return prg_.m(); }
  std::size_t d() const { return prg_.d(); }
  const std::vector<std::uint64_t>& range() const { return range_; }
  bool injective() const { return range_.size() == (std::size_t{1} << prg_.m()); }

  bool contains(std::uint64_t x) const { return std::binary_search(range_.begin(), range_.end(), x); }
  int operator()(std::uint64_t x) const { return contains(x) ? 1 : -1; }
  int operator()(const std::vector<int>& x) const { return (*this)(pack_point(x)); }

  // A seed y with G(y) = x, when x is in the range.
  std::optional<std::uint64_t> witness(std::uint64_t x) const {
    const auto it = std::lower_bound(range_.begin(), range_.end(), x);
    if (it == range_.end() || *it != x) return std::nullopt;
    return witness_[static_cast<std::size_t>(it - range_.begin())];
  }

  bool verify_witness(std::uint64_t x, std::uint64_t y) const { return prg_.eval_packed(y)[0] == x; }

 private:
  LocalPrg prg_;
  std::vector<std::uint64_t> range_;
  std::vector<std::uint64_t> witness_;
};

struct AgreementCounts {
  std::uint64_t agree_uniform = 0;  // #{x in {+-1}^d : f(x) = h(x)}
  std::uint64_t plus_uniform = 0;   // #{x : f(x) = +1}
  std::uint64_t plus_prg = 0;       // #{y in {+-1}^m : f(G(y)) = +1}
};

inline constexpr std::size_t exact_agreement_max_d = 24;

inline AgreementCounts agreement_counts(const Classifier& f, const HardFunction& h, std::size_t threads = 1) {
  detail::require(h.d() <= exact_agreement_max_d, "exact agreement needs d <= 24");
  const std::uint64_t points = std::uint64_t{1} << h.d();
  const std::uint64_t seeds = std::uint64_t{1} << h.m();
  constexpr std::uint64_t block = 4096;
  const std::size_t ublocks = static_cast<std::size_t>((points + block - 1) / block);
  const std::size_t sblocks = static_cast<std::size_t>((seeds + block - 1) / block);
  std::vector<AgreementCounts> partial(ublocks + sblocks);
  parallel_for(ublocks + sblocks, threads, [&](std::size_t b) {
    auto& c = partial[b];
    if (b < ublocks) {
      const std::uint64_t end = std::min(points, (b + 1) * block);
      for (std::uint64_t x = b * block; x < end; ++x) {
        const int v = f(unpack_point(x, h.d()));
        c.plus_uniform += v > 0;
        c.agree_uniform += v == h(x);
      }
    } else {
      const std::uint64_t start = (b - ublocks) * block;
      const std::uint64_t end = std::min(seeds, start + block);
      for (std::uint64_t y = start; y < end; ++y) {
        c.plus_prg += f(unpack_point(h.prg().eval_packed(y)[0], h.d())) > 0;
      }
    }
  });
  AgreementCounts total;
  for (const auto& c : partial) {
    total.agree_uniform += c.agree_uniform;
    total.plus_uniform += c.plus_uniform;
    total.plus_prg += c.plus_prg;
  }
  return total;
}

// Pr_{x ~ D}[f(x) = h(x)], D = (U_d + G(U_m)) / 2. On G(U_m), h = +1.
inline double agreement_probability(const Classifier& f, const HardFunction& h, std::size_t threads = 1) {
  const auto c = agreement_counts(f, h, threads);
  return 0.5 * std::ldexp(static_cast<double>(c.agree_uniform), -static_cast<int>(h.d())) +
         0.5 * std::ldexp(static_cast<double>(c.plus_prg), -static_cast<int>(h.m()));
}

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

inline MonteCarloEstimate agreement_monte_carlo(const Classifier& f, const HardFunction& h, std::size_t samples,
                                                std::uint64_t seed) {
  detail::require(samples >= 1, "Monte Carlo needs at least one sample");
  Rng rng(seed);
  const std::uint64_t dmask = h.d() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << h.d()) - 1;
  const std::uint64_t mmask = (std::uint64_t{1} << h.m()) - 1;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const bool from_prg = rng.next_u64() & 1;
    const std::uint64_t x = from_prg ? h.prg().eval_packed(rng.next_u64() & mmask)[0] : rng.next_u64() & dmask;
    hits += f(unpack_point(x, h.d())) == h(x);
  }
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(samples)), samples};
}

struct HardnessCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double epsilon = 0.0;
  bool holds = false;
  std::size_t m = 0, d = 0, range_size = 0;
  bool injective = false;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> witnesses;  // (x, y) spot checks, all verified
};

inline constexpr double hardness_slack = 0x1p-50;

inline HardnessCheck check_hardness_bound(const Classifier& f, const HardFunction& h, std::size_t threads = 1,
                                          std::size_t witness_checks = 8) {
  const auto c = agreement_counts(f, h, threads);
  const int d = static_cast<int>(h.d());
  const int m = static_cast<int>(h.m());
  HardnessCheck r;
  r.m = h.m();
  r.d = h.d();
  r.range_size = h.range().size();
  r.injective = h.injective();
  r.lhs = 0.5 * std::ldexp(static_cast<double>(c.agree_uniform), -d) + 0.5 * std::ldexp(static_cast<double>(c.plus_prg), -m);
  const double mean_prg = 2.0 * std::ldexp(static_cast<double>(c.plus_prg), -m) - 1.0;
  const double mean_uniform = 2.0 * std::ldexp(static_cast<double>(c.plus_uniform), -d) - 1.0;
  r.epsilon = std::abs(mean_prg - mean_uniform);
  r.rhs = 0.5 + r.epsilon / 4.0 + std::ldexp(1.0, m - d - 1);
  r.holds = r.lhs <= r.rhs + hardness_slack;
  const std::size_t step = std::max<std::size_t>(1, h.range().size() / std::max<std::size_t>(1, witness_checks));
  for (std::size_t i = 0; i < h.range().size() && r.witnesses.size() < witness_checks; i += step) {
    const std::uint64_t x = h.range()[i];
    const auto y = h.witness(x);
    detail::require(y && h.verify_witness(x, *y), "internal: witness check failed");
    r.witnesses.emplace_back(x, *y);
  }
  return r;
}

inline nlohmann::json hardness_to_json(const HardnessCheck& r) {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& [x, y] : r.witnesses) w.push_back({{"x", x}, {"seed", y}, {"verified", true}});
  return {{"schema", "forge.hardness"}, {"version", 1}, {"m", r.m}, {"d", r.d}, {"lhs", r.lhs}, {"rhs", r.rhs},
          {"epsilon", r.epsilon}, {"holds", r.holds}, {"range_size", r.range_size}, {"injective", r.injective},
          {"witnesses", w}};
}

}  // namespace forge
