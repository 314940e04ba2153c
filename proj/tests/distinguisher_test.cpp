#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "forge/distinguisher.hpp"
#include "forge/mlp.hpp"
#include "test_util.hpp"

using namespace forge;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> normals(std::size_t n, double mean, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = mean + rng.normal();
  return out;
}

// Advantage over every threshold in {-inf} U samples U {+inf}.
double brute_scan(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> ts(x);
  ts.insert(ts.end(), y.begin(), y.end());
  ts.push_back(-INFINITY);
  double best = 0.0;
  for (double t : ts) {
    double px = 0, py = 0;
    for (double v : x) px += v > t;
    for (double v : y) py += v > t;
    best = std::max(best, std::abs(px / x.size() - py / y.size()));
  }
  return best;
}

}  // namespace

TEST(ThresholdScan, SeparatedSamples) {
  const auto r = threshold_scan({0.0, 1.0, 2.0}, {5.0, 6.0});
  EXPECT_DOUBLE_EQ(r.advantage, 1.0);
  ASSERT_TRUE(r.threshold);
  EXPECT_DOUBLE_EQ(*r.threshold, 3.5);
}

TEST(ThresholdScan, IdenticalSamplesGiveZero) {
  const auto r = threshold_scan({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(r.advantage, 0.0);
  EXPECT_GT(r.ci_high, 0.0);
}

TEST(ThresholdScan, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(threshold_scan({}, {1.0}), ValidationError);
  EXPECT_THROW(threshold_scan({NAN}, {1.0}), ValidationError);
}

TEST(ThresholdScan, GaussianShiftMatchesClosedForm) {
  const double oracle = 2.0 * phi(0.25) - 1.0;
  EXPECT_NEAR(oracle, 0.197, 5e-4);
  const auto r = threshold_scan(normals(100000, 0.0, 1), normals(100000, 0.5, 2));
  EXPECT_NEAR(r.advantage, oracle, 0.01);
  EXPECT_LE(r.ci_low, oracle);
  EXPECT_GE(r.ci_high, oracle);
  EXPECT_NEAR(*r.threshold, 0.25, 0.2);
}

TEST(ThresholdScan, AgreesWithBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t nx = 1 + rng.uniform_below(300), ny = 1 + rng.uniform_below(300);
    std::vector<double> x(nx), y(ny);
    // Coarse grid to force ties.
    for (auto& v : x) v = static_cast<double>(rng.uniform_below(20));
    for (auto& v : y) v = static_cast<double>(rng.uniform_below(20)) + (trial % 3);
    EXPECT_DOUBLE_EQ(threshold_scan(x, y).advantage, brute_scan(x, y)) << trial;
  }
  const auto x = normals(1000, 0.0, 10), y = normals(1000, 0.3, 11);
  EXPECT_DOUBLE_EQ(threshold_scan(x, y).advantage, brute_scan(x, y));
}

TEST(ThresholdScan, NullCoverage) {
  int covered = 0;
  for (int t = 0; t < 200; ++t) {
    const auto r = threshold_scan(normals(500, 0.0, 100 + 2 * t), normals(500, 0.0, 101 + 2 * t));
    covered += r.ci_low <= 0.0;
  }
  EXPECT_GE(covered, 190);
}

TEST(ThresholdScan, WindowRestrictsThresholds) {
  ScanOptions opt;
  opt.window_lo = 10.0;
  opt.window_hi = 20.0;
  const auto r = threshold_scan({0.0, 1.0}, {5.0, 6.0}, opt);
  EXPECT_DOUBLE_EQ(r.advantage, 0.0);
}

TEST(SubGaussian, Scale) {
  EXPECT_DOUBLE_EQ(subgaussian_scale(1.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(subgaussian_scale(3.0, 8.0), 12.0);
  EXPECT_THROW(subgaussian_scale(0.0, 4.0), ValidationError);
  EXPECT_THROW(subgaussian_scale(1.0, 0.0), ValidationError);
}

TEST(SubGaussian, TailOfLipschitzStatistic) {
  // Sum of n Rademacher coordinates is sqrt(n)-Lipschitz in l2 with range [-1,1] per coordinate.
  const std::size_t n = 64;
  const double sigma = subgaussian_scale(std::sqrt(static_cast<double>(n)), static_cast<double>(n));
  Rng rng(5);
  const std::size_t trials = 20000;
  for (double t : {1.0, 2.0, 3.0}) {
    std::size_t exceed = 0;
    for (std::size_t k = 0; k < trials; ++k) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += rng.sign();
      exceed += std::abs(s) >= t * std::sqrt(static_cast<double>(n));
    }
    // Scaled bound 2 exp(-u^2 / (2 sigma^2)) with u = t sqrt(n) is loose; use Hoeffding in sqrt(n) units.
    EXPECT_LE(static_cast<double>(exceed) / trials, 2.0 * std::exp(-t * t / 2.0) + 0.01);
    EXPECT_GT(sigma, t * std::sqrt(static_cast<double>(n)) / 10.0);
  }
}

TEST(SubGaussian, WindowContainsMeans) {
  const auto [lo, hi] = scan_window(0.0, 1.0, 2.0, 0.01);
  EXPECT_LT(lo, 0.0);
  EXPECT_GT(hi, 1.0);
  EXPECT_NEAR(hi - 1.0, 2.0 * std::sqrt(2.0 * std::log(200.0)), 1e-12);
}

TEST(Ipm, ConstantAndCoordinateNets) {
  SampleSet p, q;
  p.d = q.d = 2;
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    p.push_back({rng.uniform01(), rng.uniform01()});
    q.push_back({rng.uniform01() + 0.5, rng.uniform01()});
  }
  Layer zero = make_layer(1, 2, {FixedScalar(0), FixedScalar(0)}, {FixedScalar(3)});
  std::vector<ReluNet> constant{ReluNet({zero})};
  EXPECT_DOUBLE_EQ(ipm_report(constant, p, q).advantage, 0.0);

  const auto r = ipm_report({coordinate_net(2, 0), coordinate_net(2, 1)}, p, q);
  EXPECT_NEAR(r.advantage, 0.5, 0.03);
  EXPECT_LE(r.ci_low, 0.5);
  EXPECT_GE(r.ci_high, 0.5);
  EXPECT_EQ(r.details["per_function"].size(), 2u);
  EXPECT_THROW(ipm_report({coordinate_net(3, 0)}, p, q), ValidationError);
}

TEST(Report, JsonAndLossCurve) {
  AttackReport r;
  r.method = "mlp-depth-1";
  r.loss_curve = {{0, 0.0, 0.5}, {1000, -0.25, 0.75}};
  const auto j = report_to_json(r);
  EXPECT_EQ(j["schema"], "forge.attack");
  EXPECT_EQ(j["loss_curve"].size(), 2u);
  std::ostringstream out;
  write_loss_curve_csv(r.loss_curve, out);
  EXPECT_EQ(out.str(), "step,test_loss,accuracy\n0,0,0.5\n1000,-0.25,0.75\n");
}

TEST(Adam, TwoStepHandTrace) {
  // Scalar parameter, constant gradient g: after bias correction each step moves by lr * g / (|g| + eps').
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  const auto h = adam.add(1);
  float p = 1.0f;
  float g = 2.0f;
  adam.begin_step();
  adam.update(h, &p, &g);
  EXPECT_NEAR(p, 0.9f, 1e-6);
  // Step 2 with gradient -2: m = 0.9*0.2 - 0.2 = -0.02, mhat = -0.02/0.19; v = 0.999*0.004 + 0.004, vhat = v/(1-0.998001).
  g = -2.0f;
  adam.begin_step();
  adam.update(h, &p, &g);
  const double m = -0.02 / 0.19;
  const double v = (0.999 * 0.004 + 0.001 * 4.0) / (1.0 - 0.999 * 0.999);
  EXPECT_NEAR(p, 0.9 - 0.1 * m / (std::sqrt(v) + 1e-8), 1e-6);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(9);
  Mlp net(3, 2, 5, rng);
  Eigen::MatrixXf x = Eigen::MatrixXf::Random(3, 4);
  Eigen::RowVectorXf c = Eigen::RowVectorXf::Random(4);
  net.forward(x);
  std::vector<Eigen::MatrixXf> gw;
  std::vector<Eigen::VectorXf> gb;
  net.backward(c, gw, gb);
  auto objective = [&] { return static_cast<double>((net.logits(x).array() * c.array()).sum()); };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (Eigen::Index k = 0; k < std::min<Eigen::Index>(6, net.weights()[l].size()); ++k) {
      float& w = net.weights()[l].data()[k];
      const float saved = w;
      w = saved + 1e-2f;
      const double up = objective();
      w = saved - 1e-2f;
      const double down = objective();
      w = saved;
      EXPECT_NEAR((up - down) / 2e-2, gw[l].data()[k], 2e-2) << l << " " << k;
    }
  }
}

TEST(Mlp, IdenticalDistributionsStayNearChance) {
  TrainConfig cfg;
  cfg.width = 32;
  cfg.steps = 400;
  cfg.eval_every = 200;
  cfg.eval_samples = 20000;
  const auto res = train_discriminator(cfg, biased_bits_sampler(16), biased_bits_sampler(16));
  EXPECT_EQ(res.report.status, "ok");
  EXPECT_EQ(res.report.loss_curve.size(), 3u);
  EXPECT_NEAR(res.report.details["balanced_accuracy"].get<double>(), 0.5, 0.03);
  EXPECT_GT(res.report.loss_curve.back().test_loss, -0.05);
}

TEST(Mlp, BiasedBitsAreDetected) {
  // Oracle: the Bayes classifier for uniform vs 0.75-biased bits on d = 16 thresholds the
  // number of +1 coordinates; its balanced accuracy is computed from binomial tails.
  const int d = 16;
  double best = 0.0;
  for (int t = 0; t <= d + 1; ++t) {
    double p_real = 0, p_fake = 0;
    for (int k = t; k <= d; ++k) {
      const double c = std::tgamma(d + 1.0) / (std::tgamma(k + 1.0) * std::tgamma(d - k + 1.0));
      p_real += c * std::pow(0.75, k) * std::pow(0.25, d - k);
      p_fake += c * std::pow(0.5, d);
    }
    best = std::max(best, 0.5 * (p_real + 1.0 - p_fake));
  }
  TrainConfig cfg;
  cfg.width = 32;
  cfg.steps = 1000;
  cfg.eval_every = 500;
  cfg.eval_samples = 20000;
  const auto res = train_discriminator(cfg, biased_bits_sampler(d), biased_bits_sampler(d, 0.75));
  const double acc = res.report.details["balanced_accuracy"].get<double>();
  EXPECT_GE(acc, 0.7);
  EXPECT_LE(acc, best + 0.01);
  EXPECT_LT(res.report.loss_curve.back().test_loss, -0.1);
  EXPECT_GT(res.report.advantage, 0.4);
}

TEST(Mlp, TrainingIsDeterministic) {
  TrainConfig cfg;
  cfg.hidden_layers = 2;
  cfg.width = 16;
  cfg.steps = 100;
  cfg.eval_every = 50;
  cfg.eval_samples = 2000;
  cfg.seed = 77;
  Hypergraph g = sample_hypergraph(10, 20, 5, 3);
  LocalPrg prg(g, tsa_predicate());
  const auto a = train_discriminator(cfg, prg_sampler(prg), biased_bits_sampler(20));
  const auto b = train_discriminator(cfg, prg_sampler(prg), biased_bits_sampler(20));
  ASSERT_EQ(a.report.loss_curve.size(), b.report.loss_curve.size());
  for (std::size_t i = 0; i < a.report.loss_curve.size(); ++i) {
    EXPECT_EQ(a.report.loss_curve[i].test_loss, b.report.loss_curve[i].test_loss);
  }
  TrainConfig bad = cfg;
  bad.hidden_layers = 5;
  EXPECT_THROW(train_discriminator(bad, prg_sampler(prg), biased_bits_sampler(20)), ValidationError);
}

TEST(Samplers, PrgSamplerMatchesEval) {
  Hypergraph g = sample_hypergraph(12, 30, 5, 4);
  LocalPrg prg(g, tsa_predicate());
  const auto s = prg_sampler(prg);
  Rng a(1), b(1);
  std::vector<float> out(30);
  for (int k = 0; k < 20; ++k) {
    s.draw(a, out.data());
    const std::uint64_t mask = b.next_u64() & ((1u << 12) - 1);
    std::vector<int> seed(12);
    for (int i = 0; i < 12; ++i) seed[i] = (mask >> i) & 1 ? -1 : 1;
    const auto y = prg.eval(seed);
    for (int l = 0; l < 30; ++l) EXPECT_EQ(out[l], static_cast<float>(y[l]));
  }
}
