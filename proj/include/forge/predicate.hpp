#pragma once

// Boolean predicates on {+-1}^k and their Fourier expansions.
// Truth tables are indexed so that bit i of the index is set iff x_{i+1} = -1.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/fixed_scalar.hpp"
#include "forge/rng.hpp"

namespace forge {

inline constexpr unsigned kMaxPredicateArity = 16;

inline std::uint32_t point_index(const std::vector<int>& x) {
  std::uint32_t idx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    detail::require(x[i] == 1 || x[i] == -1, "predicate inputs must be +1 or -1");
    if (x[i] == -1) idx |= (1u << i);
  }
  return idx;
}

inline std::vector<int> index_point(std::uint32_t idx, unsigned k) {
  std::vector<int> x(k);
  for (unsigned i = 0; i < k; ++i) x[i] = (idx >> i) & 1u ? -1 : 1;
  return x;
}

// AND on +-1 values: +1 iff both inputs are +1.
inline int and_pm(int a, int b) { return (a == 1 && b == 1) ? 1 : -1; }

class Predicate {
 public:
  Predicate() = default;
  Predicate(unsigned k, std::vector<int> table) : k_(k), table_(std::move(table)) {
    detail::require(k_ >= 1 && k_ <= kMaxPredicateArity, "predicate arity must be in 1.." + std::to_string(kMaxPredicateArity));
    detail::require(table_.size() == (std::size_t{1} << k_), "truth table must have 2^k entries");
    for (int v : table_) detail::require(v == 1 || v == -1, "truth table entries must be +1 or -1");
  }

  static Predicate from_function(unsigned k, const std::function<int(const std::vector<int>&)>& f) {
    detail::require(k >= 1 && k <= kMaxPredicateArity, "predicate arity must be in 1.." + std::to_string(kMaxPredicateArity));
    std::vector<int> table(std::size_t{1} << k);
    for (std::uint32_t i = 0; i < table.size(); ++i) table[i] = f(index_point(i, k));
    return Predicate(k, std::move(table));
  }

  unsigned k() const { return k_; }
  const std::vector<int>& table() const { return table_; }
  int operator()(const std::vector<int>& x) const {
    detail::require(x.size() == k_, "predicate input has wrong arity");
    return table_[point_index(x)];
  }
  int at_index(std::uint32_t idx) const { return table_[idx]; }

  bool is_constant() const {
    for (int v : table_) {
      if (v != table_.front()) return false;
    }
    return true;
  }

  friend bool operator==(const Predicate&, const Predicate&) = default;

 private:
  unsigned k_ = 0;
  std::vector<int> table_;
};

// x1 x2 x3 (x4 AND x5).
inline Predicate tsa_predicate() {
  return Predicate::from_function(5, [](const std::vector<int>& x) { return x[0] * x[1] * x[2] * and_pm(x[3], x[4]); });
}

inline Predicate parity_predicate(unsigned k) {
  return Predicate::from_function(k, [](const std::vector<int>& x) {
    int p = 1;
    for (int v : x) p *= v;
    return p;
  });
}

inline Predicate random_predicate(unsigned k, Rng& rng) {
  std::vector<int> table(std::size_t{1} << k);
  for (auto& v : table) v = rng.sign();
  return Predicate(k, std::move(table));
}

// Coefficients keyed by subset mask (bit i set iff i+1 is in S). Zero terms are omitted.
class FourierExpansion {
 public:
  FourierExpansion() = default;
  FourierExpansion(unsigned k, std::map<std::uint32_t, FixedScalar> coeffs) : k_(k), coeffs_(std::move(coeffs)) {}

  unsigned k() const { return k_; }
  const std::map<std::uint32_t, FixedScalar>& coeffs() const { return coeffs_; }
  FixedScalar coefficient(std::uint32_t mask) const {
    auto it = coeffs_.find(mask);
    return it == coeffs_.end() ? FixedScalar{} : it->second;
  }

  // Value at the point with the given table index: sum_S c_S prod_{i in S} x_i.
  FixedScalar evaluate(std::uint32_t idx) const {
    FixedScalar sum;
    for (const auto& [mask, c] : coeffs_) {
      const bool negative = __builtin_popcount(mask & idx) & 1;
      sum += negative ? -c : c;
    }
    return sum;
  }

  // Table of values; a Predicate when every value is +-1.
  Predicate inverse() const {
    std::vector<int> table(std::size_t{1} << k_);
    for (std::uint32_t i = 0; i < table.size(); ++i) {
      const FixedScalar v = evaluate(i);
      detail::require(v == FixedScalar(1) || v == FixedScalar(-1), "expansion is not +-1 valued");
      table[i] = v == FixedScalar(1) ? 1 : -1;
    }
    return Predicate(k_, std::move(table));
  }

  FixedScalar squared_norm() const {
    FixedScalar sum;
    for (const auto& [mask, c] : coeffs_) sum += c * c;
    return sum;
  }

 private:
  unsigned k_ = 0;
  std::map<std::uint32_t, FixedScalar> coeffs_;
};

// Exact Walsh-Hadamard transform: c_S = 2^-k sum_x P(x) chi_S(x).
inline FourierExpansion fourier_transform(const Predicate& p) {
  const unsigned k = p.k();
  const std::size_t n = std::size_t{1} << k;
  std::vector<long long> a(p.table().begin(), p.table().end());
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const long long x = a[j];
        const long long y = a[j + h];
        a[j] = x + y;
        a[j + h] = x - y;
      }
    }
  }
  std::map<std::uint32_t, FixedScalar> coeffs;
  for (std::uint32_t s = 0; s < n; ++s) {
    if (a[s] != 0) coeffs[s] = FixedScalar::from_mantissa(BigInt(a[s]), k);
  }
  return FourierExpansion(k, std::move(coeffs));
}

inline nlohmann::json predicate_to_json(const Predicate& p) {
  return nlohmann::json{{"schema", "forge.predicate"}, {"version", 1}, {"k", p.k()}, {"table", p.table()}};
}

inline Predicate predicate_from_json(const nlohmann::json& j) {
  detail::require(j.is_object(), "predicate must be a JSON object");
  if (j.contains("name")) {
    const auto name = j.at("name").get<std::string>();
    if (name == "tsa") return tsa_predicate();
    if (name == "parity") return parity_predicate(j.at("k").get<unsigned>());
    throw ValidationError("unknown predicate name '" + name + "'");
  }
  return Predicate(j.at("k").get<unsigned>(), j.at("table").get<std::vector<int>>());
}

}  // namespace forge
