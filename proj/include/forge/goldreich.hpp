#pragma once

// Goldreich's local generator: output l is P applied to the seed restricted
// to the l-th hyperedge, read in increasing index order.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/compiler.hpp"
#include "forge/error.hpp"
#include "forge/predicate.hpp"
#include "forge/relu_net.hpp"
#include "forge/rng.hpp"

namespace forge {

// {0,1} <-> {+-1} codec: bit b encodes (-1)^b.
inline int bit_to_pm(int b) { return b ? -1 : 1; }
inline int pm_to_bit(int v) { return v < 0 ? 1 : 0; }

struct Hypergraph {
  std::size_t m = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<std::vector<std::size_t>> sets;  // 0-based, sorted
  std::uint64_t rng_seed = 0;

  void validate() const {
    detail::require(m >= 1 && d >= 1 && k >= 1, "hypergraph needs positive m, d and k");
    detail::require(k <= m, "hyperedge size k exceeds seed length m");
    detail::require(sets.size() == d, "hypergraph must have d sets");
    for (const auto& s : sets) {
      detail::require(s.size() == k, "every hyperedge must have k indices");
      for (std::size_t i = 0; i < s.size(); ++i) {
        detail::require(s[i] < m, "hyperedge index out of range");
        detail::require(i == 0 || s[i - 1] < s[i], "hyperedge indices must be distinct and sorted");
      }
    }
  }

  // Number of hyperedges that repeat an earlier one.
  std::size_t duplicate_count() const {
    std::set<std::vector<std::size_t>> seen;
    std::size_t dup = 0;
    for (const auto& s : sets) {
      if (!seen.insert(s).second) ++dup;
    }
    return dup;
  }
};

inline Hypergraph sample_hypergraph(std::size_t m, std::size_t d, std::size_t k, std::uint64_t seed) {
  detail::require(k <= m, "hyperedge size k exceeds seed length m");
  detail::require(m >= 1 && d >= 1 && k >= 1, "hypergraph needs positive m, d and k");
  Rng rng(seed);
  Hypergraph g{m, d, k, {}, seed};
  std::vector<std::size_t> pool(m);
  for (std::size_t l = 0; l < d; ++l) {
    for (std::size_t i = 0; i < m; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.uniform_below(m - i)]);
    std::vector<std::size_t> set;
    set.reserve(k);
    for (std::size_t i = 0; i < k; ++i) set.push_back(pool[i]);
    std::sort(set.begin(), set.end());
    g.sets.push_back(std::move(set));
  }
  return g;
}

class LocalPrg {
 public:
  LocalPrg() = default;
  LocalPrg(Hypergraph graph, Predicate predicate) : graph_(std::move(graph)), predicate_(std::move(predicate)) {
    graph_.validate();
    detail::require(predicate_.k() == graph_.k, "predicate arity must equal hyperedge size");
  }

  const Hypergraph& graph() const { return graph_; }
  const Predicate& predicate() const { return predicate_; }
  std::size_t m() const { return graph_.m; }
  std::size_t d() const { return graph_.d; }

  std::vector<int> eval(const std::vector<int>& seed) const {
    detail::require(seed.size() == graph_.m, "seed length must equal m");
    for (int v : seed) detail::require(v == 1 || v == -1, "seed entries must be +1 or -1");
    std::vector<int> out(graph_.d);
    for (std::size_t l = 0; l < graph_.d; ++l) {
      std::uint32_t idx = 0;
      const auto& s = graph_.sets[l];
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (seed[s[i]] < 0) idx |= (1u << i);
      }
      out[l] = predicate_.at_index(idx);
    }
    return out;
  }

  // Seed given as a bit mask (bit i set iff seed_i = -1), m <= 64; output packed
  // the same way into 64-bit words.
  std::vector<std::uint64_t> eval_packed(std::uint64_t seed_mask) const {
    detail::require(graph_.m <= 64, "packed evaluation needs m <= 64");
    std::vector<std::uint64_t> out((graph_.d + 63) / 64, 0);
    for (std::size_t l = 0; l < graph_.d; ++l) {
      std::uint32_t idx = 0;
      const auto& s = graph_.sets[l];
      for (std::size_t i = 0; i < s.size(); ++i) idx |= static_cast<std::uint32_t>((seed_mask >> s[i]) & 1u) << i;
      if (predicate_.at_index(idx) < 0) out[l / 64] |= std::uint64_t{1} << (l % 64);
    }
    return out;
  }

 private:
  Hypergraph graph_;
  Predicate predicate_;
};

inline std::vector<int> prg_eval(const LocalPrg& g, const std::vector<int>& seed) { return g.eval(seed); }

// Coordinate l as a network on R^m: the compiled predicate with the coordinate
// selection folded into its first layer.
inline std::vector<ReluNet> realize_networks(const LocalPrg& g) {
  const ReluNet base = compile_predicate(g.predicate());
  std::vector<ReluNet> out;
  out.reserve(g.d());
  for (const auto& s : g.graph().sets) out.push_back(select_inputs(base, s, g.m()));
  return out;
}

// All outputs G(y) over y in {+-1}^m, packed; m <= 20.
inline std::vector<std::vector<std::uint64_t>> prg_image(const LocalPrg& g, bool distinct = true) {
  detail::require(g.m() <= 20, "image enumeration needs m <= 20");
  std::vector<std::vector<std::uint64_t>> out;
  out.reserve(std::size_t{1} << g.m());
  for (std::uint64_t y = 0; y < (std::uint64_t{1} << g.m()); ++y) out.push_back(g.eval_packed(y));
  if (distinct) {
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  return out;
}

inline nlohmann::json hypergraph_to_json(const Hypergraph& g) {
  return {{"schema", "forge.hypergraph"}, {"version", 1}, {"m", g.m}, {"d", g.d}, {"k", g.k}, {"rng_seed", g.rng_seed}, {"sets", g.sets}};
}

inline Hypergraph hypergraph_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.value("schema", "") == "forge.hypergraph", "not a forge.hypergraph document");
  Hypergraph g;
  g.m = j.at("m").get<std::size_t>();
  g.d = j.at("d").get<std::size_t>();
  g.k = j.at("k").get<std::size_t>();
  g.rng_seed = j.value("rng_seed", std::uint64_t{0});
  g.sets = j.at("sets").get<std::vector<std::vector<std::size_t>>>();
  g.validate();
  return g;
}

}  // namespace forge
