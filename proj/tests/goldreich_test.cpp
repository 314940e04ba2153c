#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "forge/goldreich.hpp"
#include "test_util.hpp"

namespace forge {
namespace {

using testing::cube;
using testing::fixed_point;

TEST(TsaPredicateTest, TableMatchesFormula) {
  const Predicate p = tsa_predicate();
  EXPECT_EQ(p({1, 1, 1, 1, 1}), 1);
  EXPECT_EQ(p({-1, 1, 1, 1, 1}), -1);
  for (const auto& x : cube(5)) {
    const int and45 = (x[3] == 1 && x[4] == 1) ? 1 : -1;
    EXPECT_EQ(p(x), x[0] * x[1] * x[2] * and45);
  }
}

TEST(HypergraphTest, ForcedSetAndDeterminism) {
  const Hypergraph g = sample_hypergraph(5, 1, 5, 99);
  ASSERT_EQ(g.sets.size(), 1u);
  EXPECT_EQ(g.sets[0], (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  const Hypergraph a = sample_hypergraph(50, 200, 5, 7);
  const Hypergraph b = sample_hypergraph(50, 200, 5, 7);
  EXPECT_EQ(a.sets, b.sets);
  EXPECT_THROW(sample_hypergraph(4, 3, 5, 1), ValidationError);
}

TEST(HypergraphTest, IndexFrequenciesPassChiSquared) {
  const std::size_t m = 50;
  const Hypergraph g = sample_hypergraph(m, 200, 5, 2024);
  std::vector<double> counts(m, 0.0);
  for (const auto& s : g.sets) {
    for (auto i : s) counts[i] += 1.0;
  }
  const double expected = 200.0 * 5.0 / static_cast<double>(m);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(m - 1));
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 1e-3);
}

TEST(PrgEvalTest, ConstantSeeds) {
  const LocalPrg prg(sample_hypergraph(10, 30, 5, 3), tsa_predicate());
  for (int v : prg.eval(std::vector<int>(10, 1))) EXPECT_EQ(v, 1);
  // P(-1, ..., -1) = (-1)^3 (-1 AND -1) = (-1)(-1) = +1.
  EXPECT_EQ(tsa_predicate()({-1, -1, -1, -1, -1}), 1);
  for (int v : prg.eval(std::vector<int>(10, -1))) EXPECT_EQ(v, 1);
  std::vector<int> bad(10, 1);
  bad[3] = 0;
  EXPECT_THROW(prg.eval(bad), ValidationError);
}

TEST(PrgEvalTest, SingleSetEqualsPredicate) {
  const LocalPrg prg(sample_hypergraph(5, 1, 5, 1), tsa_predicate());
  for (const auto& x : cube(5)) EXPECT_EQ(prg.eval(x)[0], tsa_predicate()(x));
}

TEST(PrgEvalTest, PackedMatchesUnpacked) {
  const LocalPrg prg(sample_hypergraph(12, 70, 5, 4), tsa_predicate());
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t mask = rng.next_u64() & ((1u << 12) - 1);
    std::vector<int> seed(12);
    for (int i = 0; i < 12; ++i) seed[i] = (mask >> i) & 1 ? -1 : 1;
    const auto out = prg.eval(seed);
    const auto packed = prg.eval_packed(mask);
    for (std::size_t l = 0; l < 70; ++l) EXPECT_EQ(out[l] < 0, ((packed[l / 64] >> (l % 64)) & 1) == 1);
  }
}

TEST(RealizeNetworksTest, ProjectionForIdentityPredicate) {
  const Predicate id(1, {1, -1});
  const LocalPrg prg(sample_hypergraph(3, 1, 1, 5), id);
  const auto nets = realize_networks(prg);
  ASSERT_EQ(nets.size(), 1u);
  EXPECT_EQ(nets[0].depth(), 1u);
  for (const auto& x : cube(3)) EXPECT_EQ(nets[0].eval_exact(fixed_point(x))[0], FixedScalar(x[prg.graph().sets[0][0]]));
}

TEST(RealizeNetworksTest, TsaExhaustiveOnSmallSeed) {
  const LocalPrg prg(sample_hypergraph(10, 4, 5, 8), tsa_predicate());
  const auto nets = realize_networks(prg);
  for (const auto& net : nets) {
    EXPECT_EQ(net.profile().L, 5u);
    EXPECT_EQ(net.d_in(), 10u);
  }
  for (const auto& x : cube(10)) {
    const auto expected = prg.eval(x);
    for (std::size_t l = 0; l < 4; ++l) ASSERT_EQ(nets[l].eval_exact(fixed_point(x))[0], FixedScalar(expected[l]));
  }
}

TEST(RealizeNetworksTest, TsaSampledOnLargeSeed) {
  const LocalPrg prg(sample_hypergraph(50, 200, 5, 9), tsa_predicate());
  const auto nets = realize_networks(prg);
  Rng rng(10);
  std::vector<double> x(50);
  std::vector<int> xi(50);
  for (int t = 0; t < 100000; ++t) {
    for (int i = 0; i < 50; ++i) {
      xi[i] = rng.sign();
      x[i] = xi[i];
    }
    const auto expected = prg.eval(xi);
    // Values are small integers, so the float path is exact here.
    for (std::size_t l = 0; l < 200; l += 1 + static_cast<std::size_t>(t % 7)) {
      ASSERT_EQ(nets[l].eval_float(x)[0], static_cast<double>(expected[l]));
    }
  }
}

TEST(RealizeNetworksTest, LocalityUnderExactArithmetic) {
  const LocalPrg prg(sample_hypergraph(12, 6, 5, 11), tsa_predicate());
  const auto nets = realize_networks(prg);
  Rng rng(12);
  for (std::size_t l = 0; l < nets.size(); ++l) {
    const auto& s = prg.graph().sets[l];
    for (int t = 0; t < 50; ++t) {
      FixedVector x;
      for (int i = 0; i < 12; ++i) x.emplace_back(rng.sign());
      const auto base = nets[l].eval_exact(x)[0];
      for (std::size_t i = 0; i < 12; ++i) {
        if (std::find(s.begin(), s.end(), i) != s.end()) continue;
        FixedVector y = x;
        y[i] = FixedScalar::from_double(rng.uniform(-5, 5));
        ASSERT_EQ(nets[l].eval_exact(y)[0], base);
      }
    }
  }
}

TEST(PrgImageTest, SupportAtMostTwoToTheM) {
  for (std::size_t m : {6u, 8u, 12u, 16u}) {
    const LocalPrg prg(sample_hypergraph(m, 2 * m, 5, m), tsa_predicate());
    const auto image = prg_image(prg);
    EXPECT_LE(image.size(), std::size_t{1} << m);
    EXPECT_GE(image.size(), 1u);
  }
}

TEST(HypergraphJsonTest, RoundTrip) {
  const Hypergraph g = sample_hypergraph(20, 15, 5, 77);
  const Hypergraph back = hypergraph_from_json(nlohmann::json::parse(hypergraph_to_json(g).dump()));
  EXPECT_EQ(back.sets, g.sets);
  EXPECT_EQ(back.rng_seed, 77u);
  auto bad = hypergraph_to_json(g);
  bad["sets"][0][0] = 25;
  EXPECT_THROW(hypergraph_from_json(bad), ValidationError);
}

}  // namespace
}  // namespace forge
