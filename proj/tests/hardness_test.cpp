#include <gtest/gtest.h>

#include <set>

#include "forge/hardness.hpp"
#include "test_util.hpp"

using namespace forge;

namespace {

Predicate identity_predicate() { return Predicate(1, {1, -1}); }

LocalPrg coordinate_prg(std::size_t m, const std::vector<std::size_t>& picks) {
  Hypergraph g;
  g.m = m;
  g.d = picks.size();
  g.k = 1;
  for (auto i : picks) g.sets.push_back({i});
  return LocalPrg(g, identity_predicate());
}

LocalPrg duplicator() { return coordinate_prg(4, {0, 1, 2, 3, 0, 1, 2, 3}); }

LtfGate random_gate(std::size_t n, Rng& rng) {
  LtfGate g;
  for (std::size_t i = 0; i < n; ++i) {
    g.inputs.push_back(i);
    g.weights.push_back(FixedScalar::from_mantissa(BigInt(static_cast<long long>(rng.uniform_below(17)) - 8), 2));
  }
  g.bias = FixedScalar::from_mantissa(BigInt(static_cast<long long>(rng.uniform_below(17)) - 8), 2);
  return g;
}

}  // namespace

TEST(HardFunction, IdentityPrgHasFullRange) {
  const HardFunction h(coordinate_prg(2, {0, 1}));
  for (std::uint64_t x = 0; x < 4; ++x) EXPECT_EQ(h(x), 1);
  EXPECT_TRUE(h.injective());
}

TEST(HardFunction, Duplicator) {
  const HardFunction h(duplicator());
  EXPECT_EQ(h(std::vector<int>(8, 1)), 1);
  std::vector<int> x(8, 1);
  x[0] = -1;  // x1 != x5
  EXPECT_EQ(h(x), -1);
  EXPECT_EQ(h.range().size(), 16u);
  // Exhaustive count against a direct membership test.
  std::size_t plus = 0;
  for (std::uint64_t v = 0; v < 256; ++v) {
    const bool dup = (v & 0xF) == (v >> 4);
    EXPECT_EQ(h(v) == 1, dup);
    plus += h(v) == 1;
  }
  EXPECT_EQ(plus, 16u);
}

TEST(HardFunction, RangeBoundedAndWitnessesVerify) {
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 3 + rng.uniform_below(6);
    const auto g = sample_hypergraph(m, 12, std::min<std::size_t>(3, m), 10 + t);
    const HardFunction h(LocalPrg(g, random_predicate(static_cast<unsigned>(g.k), rng)));
    EXPECT_LE(h.range().size(), std::size_t{1} << m);
    std::set<std::uint64_t> image;
    for (std::uint64_t y = 0; y < (std::uint64_t{1} << m); ++y) image.insert(h.prg().eval_packed(y)[0]);
    EXPECT_EQ(image.size(), h.range().size());
    for (auto x : h.range()) {
      const auto y = h.witness(x);
      ASSERT_TRUE(y);
      EXPECT_TRUE(h.verify_witness(x, *y));
    }
    EXPECT_FALSE(h.witness(~std::uint64_t{0}).has_value());
  }
}

TEST(HardFunction, RejectsLargeSeed) {
  EXPECT_THROW(HardFunction(LocalPrg(sample_hypergraph(21, 30, 3, 1), parity_predicate(3))),
               ValidationError);
}

TEST(Agreement, ConstantClassifier) {
  const HardFunction h(duplicator());
  const Classifier plus = [](const std::vector<int>&) { return 1; };
  EXPECT_DOUBLE_EQ(agreement_probability(plus, h), 0.53125);
  const auto r = check_hardness_bound(plus, h);
  EXPECT_EQ(r.epsilon, 0.0);
  EXPECT_EQ(r.lhs, r.rhs);
  EXPECT_TRUE(r.holds);
}

TEST(Agreement, OracleClassifierIsPerfect) {
  const HardFunction h(duplicator());
  const Classifier cheat = [&h](const std::vector<int>& x) { return h(x); };
  EXPECT_DOUBLE_EQ(agreement_probability(cheat, h), 1.0);
  // The duplicator does not fool its own range test, so the bound still holds.
  const auto r = check_hardness_bound(cheat, h);
  EXPECT_GT(r.epsilon, 1.8);
  EXPECT_TRUE(r.holds);
}

TEST(Agreement, RandomGateMatchesDoubleEnumeration) {
  Rng rng(2);
  const HardFunction h(duplicator());
  for (int t = 0; t < 10; ++t) {
    const LtfCircuit c(8, {random_gate(8, rng)});
    double agree_u = 0, plus_g = 0;
    for (const auto& x : forge::testing::cube(8)) {
      // Membership by definition: some seed maps to x.
      int hx = -1;
      for (const auto& y : forge::testing::cube(4)) {
        if (h.prg().eval(y) == x) hx = 1;
      }
      agree_u += c.eval(x) == hx;
    }
    for (const auto& y : forge::testing::cube(4)) plus_g += c.eval(h.prg().eval(y)) == 1;
    const double oracle = 0.5 * agree_u / 256.0 + 0.5 * plus_g / 16.0;
    EXPECT_DOUBLE_EQ(agreement_probability(classifier_from_circuit(c), h), oracle) << t;
  }
}

TEST(Agreement, ThreadCountDoesNotMatter) {
  Rng rng(3);
  const HardFunction h(LocalPrg(sample_hypergraph(8, 16, 3, 4), parity_predicate(3)));
  const auto c = random_layered_circuit(16, {4, 1}, rng);
  const auto f = classifier_from_circuit(c);
  const auto a = agreement_counts(f, h, 1);
  const auto b = agreement_counts(f, h, 4);
  EXPECT_EQ(a.agree_uniform, b.agree_uniform);
  EXPECT_EQ(a.plus_prg, b.plus_prg);
}

TEST(Agreement, MonteCarloTracksExact) {
  Rng rng(4);
  const HardFunction h(LocalPrg(sample_hypergraph(6, 12, 3, 5), parity_predicate(3)));
  const auto f = classifier_from_circuit(random_layered_circuit(12, {3, 1}, rng));
  const double exact = agreement_probability(f, h);
  const auto mc = agreement_monte_carlo(f, h, 50000, 9);
  EXPECT_NEAR(mc.value, exact, 5.0 * mc.std_error + 1e-3);
}

TEST(Agreement, NetClassifierUsesSign) {
  const HardFunction h(coordinate_prg(2, {0, 1}));
  const auto f = classifier_from_net(coordinate_net(2, 0));
  // f = x1 agrees with h = +1 exactly on x1 = +1.
  EXPECT_DOUBLE_EQ(agreement_probability(f, h), 0.5);
}

TEST(Bound, HoldsOnRandomInstances) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 2 + rng.uniform_below(7);
    const std::size_t d = m + 1 + rng.uniform_below(16 - m);
    const std::size_t k = 1 + rng.uniform_below(std::min<std::size_t>(5, m));
    const auto g = sample_hypergraph(m, d, k, 100 + t);
    const HardFunction h(LocalPrg(g, random_predicate(static_cast<unsigned>(k), rng)));
    Classifier f;
    switch (t % 3) {
      case 0: f = classifier_from_circuit(random_layered_circuit(d, {3, 2, 1}, rng)); break;
      case 1: f = classifier_from_circuit(LtfCircuit(d, {random_gate(d, rng)})); break;
      default: f = [&h](const std::vector<int>& x) { return h(x); };
    }
    const auto r = check_hardness_bound(f, h, 2);
    EXPECT_TRUE(r.holds) << t << " lhs " << r.lhs << " rhs " << r.rhs;
    const auto c = check_hardness_bound([](const std::vector<int>&) { return 1; }, h);
    EXPECT_EQ(c.epsilon, 0.0);
    EXPECT_LE(c.lhs, c.rhs);
    if (h.injective()) {
      EXPECT_NEAR(c.lhs, c.rhs, hardness_slack);
    }
    EXPECT_EQ(c.lhs, 0.5 + std::ldexp(static_cast<double>(h.range().size()), -static_cast<int>(d) - 1));
  }
}

TEST(Bound, JsonReport) {
  const HardFunction h(duplicator());
  const auto j = hardness_to_json(check_hardness_bound([](const std::vector<int>&) { return 1; }, h));
  EXPECT_EQ(j["schema"], "forge.hardness");
  EXPECT_EQ(j["lhs"].get<double>(), 0.53125);
  EXPECT_TRUE(j["injective"].get<bool>());
  EXPECT_FALSE(j["witnesses"].empty());
}
