#pragma once

// Linear threshold circuits: gates sgn(<w, x> - b) over +-1 values with
// sgn(0) = +1. Node ids 0..n-1 are circuit inputs; id n + g is gate g.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/fixed_scalar.hpp"
#include "forge/relu_net.hpp"
#include "forge/relu_net_json.hpp"
#include "forge/rng.hpp"

namespace forge {

struct LtfGate {
  std::vector<std::size_t> inputs;
  std::vector<FixedScalar> weights;
  FixedScalar bias;
};

class LtfCircuit {
 public:
  LtfCircuit() = default;
  LtfCircuit(std::size_t n, std::vector<LtfGate> gates, std::optional<std::size_t> output = std::nullopt)
      : n_(n), gates_(std::move(gates)) {
    detail::require(n_ >= 1, "circuit needs at least one input");
    detail::require(!gates_.empty(), "circuit needs at least one gate");
    output_ = output.value_or(gates_.size() - 1);
    detail::require(output_ < gates_.size(), "output gate out of range");
    for (std::size_t g = 0; g < gates_.size(); ++g) {
      const auto& gate = gates_[g];
      detail::require(gate.inputs.size() == gate.weights.size(), "gate " + std::to_string(g) + " has mismatched weights");
      for (auto u : gate.inputs) detail::require(u < n_ + gates_.size(), "gate " + std::to_string(g) + " reads an unknown node");
    }
    compute_order();
    prepare_fast();
  }

  std::size_t n() const { return n_; }
  const std::vector<LtfGate>& gates() const { return gates_; }
  std::size_t output() const { return output_; }
  const std::vector<std::size_t>& topological_order() const { return order_; }

  // Gate level = length of the longest path from an input (inputs are level 0).
  const std::vector<std::size_t>& levels() const { return levels_; }
  std::size_t depth() const { return levels_[output_]; }

  std::size_t wires() const {
    std::size_t w = 0;
    for (const auto& g : gates_) w += g.inputs.size();
    return w;
  }
  // Number of nodes: gates plus the inputs that are wired to something.
  std::size_t size() const {
    std::vector<bool> used(n_, false);
    for (const auto& g : gates_) {
      for (auto u : g.inputs) {
        if (u < n_) used[u] = true;
      }
    }
    return gates_.size() + static_cast<std::size_t>(std::count(used.begin(), used.end(), true));
  }

  // Every gate reads only nodes exactly one level below it.
  bool is_layered() const {
    for (std::size_t g = 0; g < gates_.size(); ++g) {
      for (auto u : gates_[g].inputs) {
        const std::size_t lu = u < n_ ? 0 : levels_[u - n_];
        if (lu + 1 != levels_[g]) return false;
      }
    }
    return true;
  }

  int eval(const std::vector<int>& x) const {
    detail::require(x.size() == n_, "circuit input has wrong length");
    std::vector<int> value(gates_.size(), 0);
    for (auto g : order_) {
      const auto& gate = gates_[g];
      const auto& fast = fast_[g];
      if (fast.ok) {
        __int128 z = -fast.bias;
        for (std::size_t i = 0; i < gate.inputs.size(); ++i) {
          const auto u = gate.inputs[i];
          const int v = u < n_ ? x[u] : value[u - n_];
          z += v > 0 ? fast.weights[i] : -fast.weights[i];
        }
        value[g] = z >= 0 ? 1 : -1;
        continue;
      }
      FixedScalar z = -gate.bias;
      for (std::size_t i = 0; i < gate.inputs.size(); ++i) {
        const auto u = gate.inputs[i];
        const int v = u < n_ ? x[u] : value[u - n_];
        z += v > 0 ? gate.weights[i] : -gate.weights[i];
      }
      value[g] = z.sign() >= 0 ? 1 : -1;
    }
    return value[output_];
  }

 private:
  // Integer numerators over a per-gate common denominator, when they fit in 62 bits.
  struct FastGate {
    bool ok = false;
    std::vector<__int128> weights;
    __int128 bias = 0;
  };

  void prepare_fast() {
    fast_.assign(gates_.size(), FastGate{});
    const BigInt limit = BigInt(1) << 62;
    for (std::size_t g = 0; g < gates_.size(); ++g) {
      const auto& gate = gates_[g];
      unsigned exp = gate.bias.tau();
      for (const auto& w : gate.weights) exp = std::max(exp, w.tau());
      auto scaled = [&](const FixedScalar& v) { return v.mantissa() << (exp - v.tau()); };
      FastGate f;
      f.ok = gate.inputs.size() < (std::size_t{1} << 20);
      const BigInt b = scaled(gate.bias);
      f.ok = f.ok && boost::multiprecision::abs(b) < limit;
      if (f.ok) f.bias = static_cast<__int128>(b.convert_to<long long>());
      for (const auto& w : gate.weights) {
        const BigInt v = scaled(w);
        if (boost::multiprecision::abs(v) >= limit) {
          f.ok = false;
          break;
        }
        f.weights.push_back(static_cast<__int128>(v.convert_to<long long>()));
      }
      fast_[g] = std::move(f);
    }
  }

  void compute_order() {
    const std::size_t G = gates_.size();
    std::vector<int> state(G, 0);
    levels_.assign(G, 0);
    order_.clear();
    // Iterative DFS; state 1 = on stack, 2 = done.
    for (std::size_t root = 0; root < G; ++root) {
      if (state[root] == 2) continue;
      std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
      state[root] = 1;
      while (!stack.empty()) {
        auto& [g, next] = stack.back();
        if (next < gates_[g].inputs.size()) {
          const auto u = gates_[g].inputs[next++];
          if (u < n_) continue;
          const auto h = u - n_;
          if (state[h] == 1) throw ValidationError("circuit has a cycle through gate " + std::to_string(h));
          if (state[h] == 0) {
            state[h] = 1;
            stack.push_back({h, 0});
          }
          continue;
        }
        std::size_t level = 0;
        for (auto u : gates_[g].inputs) level = std::max(level, u < n_ ? std::size_t{0} : levels_[u - n_]);
        levels_[g] = level + 1;
        state[g] = 2;
        order_.push_back(g);
        stack.pop_back();
      }
    }
  }

  std::size_t n_ = 0;
  std::vector<LtfGate> gates_;
  std::size_t output_ = 0;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> levels_;
  std::vector<FastGate> fast_;
};

// Equivalent circuit where every gate reads only the level directly below.
// Long wires are routed through shared pass-through gates sgn(v); gates that
// do not reach the output are dropped.
inline LtfCircuit layer_circuit(const LtfCircuit& c) {
  const std::size_t n = c.n();
  const auto& gates = c.gates();
  const auto& levels = c.levels();
  std::vector<bool> live(gates.size(), false);
  live[c.output()] = true;
  for (auto it = c.topological_order().rbegin(); it != c.topological_order().rend(); ++it) {
    if (!live[*it]) continue;
    for (auto u : gates[*it].inputs) {
      if (u >= n) live[u - n] = true;
    }
  }
  std::vector<LtfGate> out;
  auto node_level = [&](std::size_t u) { return u < n ? std::size_t{0} : levels[u - n]; };
  // Gates are recorded with (node, level) inputs and numbered at the end.
  struct Pending {
    std::vector<std::pair<std::size_t, std::size_t>> inputs;  // (original node, level)
    std::vector<FixedScalar> weights;
    FixedScalar bias;
    bool pass_through;
  };
  std::vector<Pending> pending;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> pending_index;
  std::function<void(std::size_t, std::size_t)> ensure_delay = [&](std::size_t u, std::size_t level) {
    if (level == node_level(u) || pending_index.count({u, level})) return;
    ensure_delay(u, level - 1);
    pending_index[{u, level}] = pending.size();
    pending.push_back(Pending{{{u, level - 1}}, {FixedScalar(1)}, FixedScalar(0), true});
  };
  for (auto g : c.topological_order()) {
    if (!live[g]) continue;
    Pending p{{}, gates[g].weights, gates[g].bias, false};
    for (auto u : gates[g].inputs) {
      ensure_delay(u, levels[g] - 1);
      p.inputs.push_back({u, levels[g] - 1});
    }
    pending_index[{n + g, levels[g]}] = pending.size();
    pending.push_back(std::move(p));
  }
  auto resolve = [&](std::size_t u, std::size_t level) -> std::size_t {
    if (u < n && level == 0) return u;
    return n + pending_index.at({u, level});
  };
  for (const auto& p : pending) {
    LtfGate gate{{}, p.weights, p.bias};
    for (auto [u, level] : p.inputs) gate.inputs.push_back(resolve(u, level));
    out.push_back(std::move(gate));
  }
  return LtfCircuit(n, std::move(out), pending_index.at({n + c.output(), levels[c.output()]}));
}

// Recentred gate: sgn(z) = sgn(z - shift) and |z - shift| >= margin on +-1 inputs.
struct GateMargin {
  FixedScalar shift;
  FixedScalar margin;
  std::optional<int> constant;
};

inline GateMargin gate_margin(const LtfGate& gate, std::size_t enumerate_limit = 20) {
  const std::size_t fanin = gate.inputs.size();
  if (fanin <= enumerate_limit) {
    std::optional<FixedScalar> pos_min;
    std::optional<FixedScalar> neg_max;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << fanin); ++mask) {
      FixedScalar z = -gate.bias;
      for (std::size_t i = 0; i < fanin; ++i) z += (mask >> i) & 1 ? -gate.weights[i] : gate.weights[i];
      if (z.sign() >= 0) {
        if (!pos_min || z < *pos_min) pos_min = z;
      } else if (!neg_max || z > *neg_max) {
        neg_max = z;
      }
    }
    if (!neg_max) return {FixedScalar{}, FixedScalar{}, 1};
    if (!pos_min) return {FixedScalar{}, FixedScalar{}, -1};
    const FixedScalar half = FixedScalar::pow2(-1);
    return {(*pos_min + *neg_max) * half, (*pos_min - *neg_max) * half, std::nullopt};
  }
  unsigned tau = gate.bias.tau();
  for (const auto& w : gate.weights) tau = std::max(tau, w.tau());
  const FixedScalar half_step = FixedScalar::pow2(-static_cast<int>(tau) - 1);
  return {-half_step, half_step, std::nullopt};
}

struct LtfCompileReport {
  FixedScalar xi_prime;
  std::optional<FixedScalar> min_margin;  // absent when every gate is constant
  std::size_t depth = 0;
  std::size_t gates = 0;
};

// Threshold circuit to ReLU network: each gate becomes h_xi'(z - shift) with
// xi' = 1/q, and the pairing [1, -1] with offset -1 that turns the two ReLUs
// back into +-1 is folded into the next layer's weights and biases.
// xi_prime must be a power of two below every gate margin; by default the
// largest such power is used.
inline ReluNet ltf_to_relu(const LtfCircuit& c, std::optional<FixedScalar> xi_prime = std::nullopt,
                           LtfCompileReport* report = nullptr) {
  detail::require(c.is_layered(), "circuit is not layered; run layer_circuit first");
  const std::size_t n = c.n();
  const std::size_t D = c.depth();
  const auto& gates = c.gates();
  const auto& levels = c.levels();
  for (std::size_t g = 0; g < gates.size(); ++g) {
    detail::require(levels[g] <= D, "gate deeper than the output; prune the circuit first");
  }
  std::vector<std::vector<std::size_t>> by_level(D + 1);
  for (std::size_t g = 0; g < gates.size(); ++g) by_level[levels[g]].push_back(g);
  std::vector<GateMargin> margins;
  std::optional<FixedScalar> min_margin;
  for (const auto& gate : gates) {
    margins.push_back(gate_margin(gate));
    if (!margins.back().constant && (!min_margin || margins.back().margin < *min_margin)) min_margin = margins.back().margin;
  }
  FixedScalar xi;
  if (xi_prime) {
    xi = *xi_prime;
    detail::require(xi.sign() > 0 && xi.mantissa() == 1, "xi_prime must be a power of two 2^-t");
    if (min_margin && !(xi < *min_margin)) {
      throw RefusedError("xi_prime " + xi.to_string() + " is not below the minimum gate margin " + min_margin->to_string());
    }
  } else {
    xi = FixedScalar(1);
    while (min_margin && !(xi < *min_margin)) xi *= FixedScalar::pow2(-1);
  }
  // q = 1 / xi.
  const FixedScalar q = xi.tau() > 0 ? FixedScalar::pow2(static_cast<int>(xi.tau())) : FixedScalar(1);

  // position of each gate within its level
  std::vector<std::size_t> pos(gates.size());
  for (const auto& lvl : by_level) {
    for (std::size_t i = 0; i < lvl.size(); ++i) pos[lvl[i]] = i;
  }
  std::vector<Layer> layers;
  for (std::size_t level = 1; level <= D; ++level) {
    const auto& lvl = by_level[level];
    const std::size_t prev_width = level == 1 ? n : 2 * by_level[level - 1].size();
    std::vector<Triplet> t;
    FixedVector bias(2 * lvl.size());
    for (std::size_t i = 0; i < lvl.size(); ++i) {
      const auto& gate = gates[lvl[i]];
      const auto& gm = margins[lvl[i]];
      if (gm.constant) {
        bias[2 * i] = FixedScalar(*gm.constant + 1);
        continue;
      }
      // z' = <w, v> - b - shift, where v = x (level 1) or v_j = u_{2j} - u_{2j+1} - 1.
      FixedScalar offset = -gate.bias - gm.shift;
      for (std::size_t k = 0; k < gate.inputs.size(); ++k) {
        const auto u = gate.inputs[k];
        const FixedScalar w = q * gate.weights[k];
        if (level == 1) {
          t.push_back({2 * i, u, w});
          t.push_back({2 * i + 1, u, w});
        } else {
          const std::size_t j = pos[u - n];
          t.push_back({2 * i, 2 * j, w});
          t.push_back({2 * i, 2 * j + 1, -w});
          t.push_back({2 * i + 1, 2 * j, w});
          t.push_back({2 * i + 1, 2 * j + 1, -w});
          offset -= gate.weights[k];
        }
      }
      bias[2 * i] = q * offset + FixedScalar(1);
      bias[2 * i + 1] = q * offset - FixedScalar(1);
    }
    layers.push_back(Layer{SparseMatrix::from_triplets(2 * lvl.size(), prev_width, std::move(t)), std::move(bias)});
  }
  {
    const std::size_t j = pos[c.output()];
    const std::size_t width = 2 * by_level[D].size();
    layers.push_back(Layer{SparseMatrix::from_triplets(1, width, {{0, 2 * j, FixedScalar(1)}, {0, 2 * j + 1, FixedScalar(-1)}}),
                           FixedVector{FixedScalar(-1)}});
  }
  if (report) *report = LtfCompileReport{xi, min_margin, D, gates.size()};
  return ReluNet(std::move(layers));
}

// Random layered circuit on n inputs with the given gate counts per level
// (the last level is forced to a single output gate). Weights and biases are
// multiples of 1/4 in [-2, 2].
inline LtfCircuit random_layered_circuit(std::size_t n, const std::vector<std::size_t>& widths, Rng& rng) {
  detail::require(!widths.empty(), "need at least one level");
  std::vector<LtfGate> gates;
  std::vector<std::size_t> prev;
  for (std::size_t i = 0; i < n; ++i) prev.push_back(i);
  auto quarter = [&](int lo, int hi) {
    return FixedScalar::from_mantissa(BigInt(lo + static_cast<long long>(rng.uniform_below(static_cast<std::uint64_t>(hi - lo + 1)))), 2);
  };
  for (std::size_t level = 0; level < widths.size(); ++level) {
    const std::size_t width = level + 1 == widths.size() ? 1 : widths[level];
    std::vector<std::size_t> current;
    for (std::size_t gi = 0; gi < width; ++gi) {
      LtfGate gate;
      const std::size_t fanin = 1 + rng.uniform_below(prev.size());
      std::vector<std::size_t> pool = prev;
      for (std::size_t i = 0; i < fanin; ++i) {
        const std::size_t pick = i + rng.uniform_below(pool.size() - i);
        std::swap(pool[i], pool[pick]);
        gate.inputs.push_back(pool[i]);
        FixedScalar w = quarter(-8, 8);
        if (w.is_zero()) w = FixedScalar(1);
        gate.weights.push_back(w);
      }
      gate.bias = quarter(-8, 8);
      current.push_back(n + gates.size());
      gates.push_back(std::move(gate));
    }
    prev = current;
  }
  return LtfCircuit(n, std::move(gates));
}

inline nlohmann::json circuit_to_json(const LtfCircuit& c) {
  nlohmann::json gates = nlohmann::json::array();
  for (const auto& g : c.gates()) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& v : g.weights) w.push_back(scalar_to_json(v));
    gates.push_back({{"inputs", g.inputs}, {"weights", w}, {"bias", scalar_to_json(g.bias)}});
  }
  return {{"schema", "forge.circuit"}, {"version", 1}, {"n", c.n()}, {"output", c.output()}, {"gates", gates}};
}

// Numbers in weights/bias may be integers, {mantissa, tau} objects, or
// decimal literals that are exactly dyadic in binary floating point.
inline FixedScalar dyadic_from_json(const nlohmann::json& j) {
  if (j.is_number_float()) return FixedScalar::from_double(j.get<double>());
  return scalar_from_json(j);
}

inline LtfCircuit circuit_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.value("schema", "") == "forge.circuit", "not a forge.circuit document");
  std::vector<LtfGate> gates;
  for (const auto& jg : j.at("gates")) {
    LtfGate g;
    g.inputs = jg.at("inputs").get<std::vector<std::size_t>>();
    for (const auto& w : jg.at("weights")) g.weights.push_back(dyadic_from_json(w));
    g.bias = dyadic_from_json(jg.at("bias"));
    gates.push_back(std::move(g));
  }
  std::optional<std::size_t> output;
  if (j.contains("output")) output = j.at("output").get<std::size_t>();
  return LtfCircuit(j.at("n").get<std::size_t>(), std::move(gates), output);
}

}  // namespace forge
