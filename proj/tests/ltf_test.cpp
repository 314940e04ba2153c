#include <gtest/gtest.h>

#include "forge/ltf_circuit.hpp"
#include "forge/predicate.hpp"
#include "test_util.hpp"

namespace forge {
namespace {

using testing::cube;
using testing::dyadic;
using testing::fixed_point;

LtfGate gate(std::vector<std::size_t> inputs, std::vector<FixedScalar> weights, FixedScalar bias) {
  return LtfGate{std::move(inputs), std::move(weights), std::move(bias)};
}

void expect_equivalent(const LtfCircuit& c, const ReluNet& net) {
  for (const auto& x : cube(static_cast<unsigned>(c.n()))) {
    ASSERT_EQ(net.eval_exact(fixed_point(x))[0], FixedScalar(c.eval(x)));
  }
}

// Arbitrary DAG: gate g reads random earlier nodes (inputs or gates).
LtfCircuit random_dag(std::size_t n, std::size_t num_gates, Rng& rng) {
  std::vector<LtfGate> gates;
  for (std::size_t g = 0; g < num_gates; ++g) {
    const std::size_t available = n + g;
    const std::size_t fanin = 1 + rng.uniform_below(std::min<std::size_t>(available, 4));
    LtfGate lg;
    std::vector<std::size_t> pool(available);
    for (std::size_t i = 0; i < available; ++i) pool[i] = i;
    for (std::size_t i = 0; i < fanin; ++i) {
      std::swap(pool[i], pool[i + rng.uniform_below(available - i)]);
      lg.inputs.push_back(pool[i]);
      lg.weights.push_back(dyadic(static_cast<long long>(rng.uniform_below(9)) - 4, 1));
    }
    lg.bias = dyadic(static_cast<long long>(rng.uniform_below(9)) - 4, 1);
    gates.push_back(std::move(lg));
  }
  return LtfCircuit(n, std::move(gates));
}

TEST(LtfCircuitTest, AndGate) {
  const LtfCircuit c(2, {gate({0, 1}, {1, 1}, dyadic(3, 1))});
  for (const auto& x : cube(2)) EXPECT_EQ(c.eval(x), and_pm(x[0], x[1]));
  const ReluNet net = ltf_to_relu(c);
  expect_equivalent(c, net);
  for (const auto& x : cube(2)) EXPECT_EQ(net.eval_exact(fixed_point(x))[0], FixedScalar(and_pm(x[0], x[1])));
}

TEST(LtfCircuitTest, XorFromThresholds) {
  const LtfCircuit c(2, {gate({0, 1}, {1, 1}, FixedScalar(-1)), gate({0, 1}, {-1, -1}, FixedScalar(-1)),
                         gate({2, 3}, {1, 1}, dyadic(3, 1))});
  EXPECT_TRUE(c.is_layered());
  EXPECT_EQ(c.depth(), 2u);
  const ReluNet net = ltf_to_relu(c);
  for (const auto& x : cube(2)) EXPECT_EQ(net.eval_exact(fixed_point(x))[0], FixedScalar(x[0] != x[1] ? 1 : -1));
  EXPECT_EQ(net.depth(), c.depth() + 1);
}

TEST(LtfCircuitTest, ConstantGate) {
  const LtfCircuit c(3, {gate({0, 1, 2}, {1, 1, 1}, FixedScalar(-10))});
  const ReluNet net = ltf_to_relu(c);
  for (const auto& x : cube(3)) EXPECT_EQ(net.eval_exact(fixed_point(x))[0], FixedScalar(1));
}

TEST(LtfCircuitTest, RefusesSlopeAboveMargin) {
  // Margin of sgn(x1 + x2 - 3/2) after recentring is 1.
  const LtfCircuit c(2, {gate({0, 1}, {1, 1}, dyadic(3, 1))});
  EXPECT_THROW(ltf_to_relu(c, FixedScalar(1)), RefusedError);
  EXPECT_NO_THROW(ltf_to_relu(c, dyadic(1, 1)));
  EXPECT_THROW(ltf_to_relu(c, dyadic(3, 3)), ValidationError);
}

TEST(LtfCircuitTest, DetectsCycles) {
  EXPECT_THROW(LtfCircuit(1, {gate({2}, {1}, 0), gate({1}, {1}, 0)}), ValidationError);
}

TEST(LtfCircuitTest, SizeAndWireAccounting) {
  const LtfCircuit c(3, {gate({0, 1}, {1, 1}, 0), gate({2, 3}, {1, 1}, 0)});
  EXPECT_EQ(c.wires(), 4u);
  EXPECT_EQ(c.size(), 5u);
  EXPECT_LE(c.size(), c.wires() + 1);
}

TEST(LayerCircuitTest, LayeredCircuitIsUnchanged) {
  const LtfCircuit c(2, {gate({0, 1}, {1, 1}, FixedScalar(-1)), gate({0, 1}, {-1, -1}, FixedScalar(-1)),
                         gate({2, 3}, {1, 1}, dyadic(3, 1))});
  const LtfCircuit layered = layer_circuit(c);
  EXPECT_EQ(layered.depth(), c.depth());
  EXPECT_EQ(layered.gates().size(), c.gates().size());
  for (const auto& x : cube(2)) EXPECT_EQ(layered.eval(x), c.eval(x));
}

TEST(LayerCircuitTest, SkipWireGetsPassThrough) {
  // Gate 1 reads gate 0 (level 1) and input x2 (level 0).
  const LtfCircuit c(3, {gate({0, 1}, {1, 1}, dyadic(1, 1)), gate({3, 2}, {1, 1}, dyadic(1, 1))});
  EXPECT_FALSE(c.is_layered());
  const LtfCircuit layered = layer_circuit(c);
  EXPECT_TRUE(layered.is_layered());
  EXPECT_EQ(layered.gates().size(), 3u);
  for (const auto& x : cube(3)) EXPECT_EQ(layered.eval(x), c.eval(x));
  expect_equivalent(c, ltf_to_relu(layered));
}

TEST(LayerCircuitTest, MajorityIsUnchanged) {
  const LtfCircuit c(3, {gate({0, 1, 2}, {1, 1, 1}, 0)});
  const LtfCircuit layered = layer_circuit(c);
  EXPECT_EQ(layered.gates().size(), 1u);
  for (const auto& x : cube(3)) {
    EXPECT_EQ(layered.eval(x), x[0] + x[1] + x[2] > 0 ? 1 : -1);
  }
}

TEST(LayerCircuitTest, RandomDagsStayEquivalentAndWithinSizeBound) {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(7);
    const LtfCircuit c = random_dag(n, 1 + rng.uniform_below(10), rng);
    const LtfCircuit layered = layer_circuit(c);
    EXPECT_TRUE(layered.is_layered());
    EXPECT_EQ(layered.depth(), c.depth());
    EXPECT_LE(layered.size(), c.depth() * c.size());
    for (const auto& x : cube(static_cast<unsigned>(n))) ASSERT_EQ(layered.eval(x), c.eval(x));
    expect_equivalent(c, ltf_to_relu(layered));
  }
}

TEST(LtfToReluTest, RandomLayeredCircuitsExhaustive) {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.uniform_below(9);
    std::vector<std::size_t> widths;
    const std::size_t depth = 1 + rng.uniform_below(4);
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(1 + rng.uniform_below(5));
    const LtfCircuit c = random_layered_circuit(n, widths, rng);
    ASSERT_TRUE(c.is_layered());
    LtfCompileReport report;
    const ReluNet net = ltf_to_relu(c, std::nullopt, &report);
    if (report.min_margin) {
      EXPECT_LT(report.xi_prime, *report.min_margin);
    }
    expect_equivalent(c, net);
  }
}

TEST(LtfToReluTest, WideCircuitOnRandomVertices) {
  // Fan-in above the enumeration limit falls back to the 2^-tau grid margin.
  Rng rng(43);
  const std::size_t n = 40;
  const LtfCircuit c = random_layered_circuit(n, {30, 10, 1}, rng);
  const ReluNet net = ltf_to_relu(c);
  for (int t = 0; t < 100000; ++t) {
    std::vector<int> x(n);
    for (auto& v : x) v = rng.sign();
    std::vector<double> xd(x.begin(), x.end());
    ASSERT_EQ(net.eval_float(xd)[0], static_cast<double>(c.eval(x)));
  }
}

TEST(LtfJsonTest, RoundTrip) {
  Rng rng(2);
  const LtfCircuit c = random_layered_circuit(5, {3, 2, 1}, rng);
  const LtfCircuit back = circuit_from_json(nlohmann::json::parse(circuit_to_json(c).dump()));
  for (const auto& x : cube(5)) EXPECT_EQ(back.eval(x), c.eval(x));
  const auto parsed = circuit_from_json(nlohmann::json::parse(
      R"({"schema":"forge.circuit","version":1,"n":2,"gates":[{"inputs":[0,1],"weights":[1,1],"bias":1.5}]})"));
  for (const auto& x : cube(2)) EXPECT_EQ(parsed.eval(x), and_pm(x[0], x[1]));
}

}  // namespace
}  // namespace forge
