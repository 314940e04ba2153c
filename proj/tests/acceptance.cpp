// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "forge/forge.hpp"

using namespace forge;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

FixedVector fixed_pm(const std::vector<int>& x) {
  FixedVector out;
  for (int v : x) out.emplace_back(v);
  return out;
}

FixedScalar grid(Rng& rng, unsigned tau, long long range) {
  const long long span = range << tau;
  return FixedScalar::from_mantissa(BigInt(static_cast<long long>(rng.uniform_below(static_cast<std::uint64_t>(2 * span + 1))) - span), tau);
}

// Entries on the 2^-tau grid in [-1, 1]; the first weight is pinned to 2^-tau so
// the net's bit complexity is exactly tau.
ReluNet grid_net(const std::vector<std::size_t>& widths, unsigned tau, Rng& rng) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    std::vector<FixedScalar> w(widths[i + 1] * widths[i]);
    for (auto& v : w) v = grid(rng, tau, 1);
    if (i == 0) w[0] = FixedScalar::from_mantissa(BigInt(1), tau);
    FixedVector b(widths[i + 1]);
    for (auto& v : b) v = grid(rng, tau, 1);
    layers.push_back(make_layer(widths[i + 1], widths[i], w, b));
  }
  return ReluNet(std::move(layers));
}

// 1. Compiled predicates reproduce their truth tables exactly.
Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::vector<Predicate> corpus{tsa_predicate()};
  for (int i = 0; i < 50; ++i) corpus.push_back(random_predicate(2 + static_cast<unsigned>(i % 7), rng));
  std::size_t wrong = 0, points = 0;
  for (const auto& p : corpus) {
    const ReluNet net = compile_predicate(p);
    for (std::uint32_t idx = 0; idx < (1u << p.k()); ++idx) {
      const auto y = net.eval_exact(fixed_pm(index_point(idx, p.k())));
      wrong += !(y.size() == 1 && y[0] == FixedScalar(p.at_index(idx)));
      ++points;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << corpus.size() << " predicates, " << points << " points, " << wrong << " mismatches, " << secs << " s";
  return {wrong == 0 && secs < 60.0, d.str()};
}

// 2. Composition accounting on 100 random compositions.
Outcome criterion2() {
  Rng rng(202);
  std::size_t done = 0, rejected = 0, bad = 0;
  double worst_ratio = 0.0;
  std::string first_bad;
  while (done < 100) {
    const unsigned tau1 = 2 + static_cast<unsigned>(rng.uniform_below(3));
    const unsigned tau2 = 2 + static_cast<unsigned>(rng.uniform_below(3));
    const std::size_t r = 1 + rng.uniform_below(3);
    const std::size_t s = 1 + rng.uniform_below(4);
    std::vector<ReluNet> inner;
    std::size_t max_depth = 0;
    double lambda1 = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      std::vector<std::size_t> widths{s};
      const std::size_t depth = 1 + rng.uniform_below(3);
      for (std::size_t i = 1; i < depth; ++i) widths.push_back(1 + rng.uniform_below(3));
      widths.push_back(1);
      inner.push_back(grid_net(widths, tau1, rng));
      max_depth = std::max(max_depth, inner.back().profile().L);
      lambda1 = std::max(lambda1, inner.back().profile().lambda);
    }
    const ReluNet outer = grid_net({r, 1 + rng.uniform_below(3), 1 + rng.uniform_below(2)}, tau2, rng);
    ComposeReport rep;
    const ReluNet c = compose(inner, outer, {}, &rep);
    // Shifts beyond the grid range change the bit complexity by design; such draws are redrawn.
    long long shift_sum = 0;
    for (const auto& v : rep.shifts) shift_sum += v.mantissa().convert_to<long long>();
    const unsigned tau = std::max(tau1, tau2);
    if (shift_sum + 2 > (1LL << tau)) {
      ++rejected;
      continue;
    }
    ++done;
    const auto p = c.profile();
    const double bound = lambda1 * outer.profile().lambda * std::sqrt(static_cast<double>(r));
    const double emp = empirical_lipschitz(c, 400, rng);
    worst_ratio = std::max(worst_ratio, emp / bound);
    const bool ok = rep.L1 == max_depth && p.L == rep.L1 + rep.L2 && p.S == (rep.S1 + 1) * r + rep.S2 && p.tau == tau &&
                    emp <= bound * (1.0 + 1e-12);
    if (!ok) {
      ++bad;
      if (first_bad.empty()) {
        std::ostringstream d;
        d << "L " << p.L << " vs " << rep.L1 + rep.L2 << ", S " << p.S << " vs " << (rep.S1 + 1) * r + rep.S2 << ", tau " << p.tau
          << " vs " << tau << ", lip " << emp << " vs " << bound;
        first_bad = d.str();
      }
    }
  }
  std::ostringstream d;
  d << "100 compositions (" << rejected << " redrawn for large shifts), " << bad << " violations, max empirical/bound "
    << worst_ratio;
  if (!first_bad.empty()) d << "; first: " << first_bad;
  return {bad == 0, d.str()};
}

// 3. Decoder coordinate against U[0,1]: exact 1D formula and an assignment
// oracle on the midpoint discretisation of U[0,1].
Outcome criterion3() {
  double worst = 0.0;
  for (unsigned n = 2; n <= 10; ++n) {
    const double eps = std::ldexp(1.0, -static_cast<int>(n));
    const ReluNet dec = build_bit_decoder(n, eps);
    std::vector<double> atoms;
    for (std::uint32_t idx = 0; idx < (1u << n); ++idx) atoms.push_back(dec.eval_exact(fixed_pm(index_point(idx, n)))[0].to_double());
    std::sort(atoms.begin(), atoms.end());
    // Integral of |F_dec(t) - t| over [0,1]; F_dec is a step function.
    const double N = static_cast<double>(atoms.size());
    double closed = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      const double a = atoms[j];
      const double b = j + 1 < atoms.size() ? atoms[j + 1] : 1.0;
      const double level = (static_cast<double>(j) + 1.0) / N;
      // integral of |level - t| on [a, b]
      auto prim = [&](double t) { return t <= level ? level * t - t * t / 2 : level * level - (level * t - t * t / 2); };
      closed += prim(b) - prim(a);
    }
    const std::size_t reps = std::max<std::size_t>(1, 1024 >> n);
    SampleSet p, q;
    p.d = q.d = 1;
    for (double a : atoms) {
      for (std::size_t k = 0; k < reps; ++k) p.push_back({a});
    }
    const std::size_t M = atoms.size() * reps;
    for (std::size_t i = 0; i < M; ++i) q.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(M)});
    const double lp = w1_empirical(p, q, {.cap = 4096, .threads = 0});
    const double target = std::ldexp(1.0, -static_cast<int>(n) - 1);
    worst = std::max({worst, std::abs(closed - target), std::abs(lp - target)});
    if (!(closed <= eps && lp <= eps)) return {false, "n=" + std::to_string(n) + " exceeds 2^-n"};
  }
  std::ostringstream d;
  d << "n=2..10, max |W1 - 2^-n-1| = " << worst;
  return {worst <= 1e-9, d.str()};
}

// 4. Support gap of the m=10, d=20 TSA PRG against U_20.
Outcome criterion4() {
  const auto t0 = Clock::now();
  const LocalPrg prg(sample_hypergraph(10, 20, 5, 404), tsa_predicate());
  const auto cert = support_gap_lower_bound(prg_image(prg).size(), AnalyticTarget::CubeBits, 20);
  const auto cert_full = support_gap_lower_bound(1024, AnalyticTarget::CubeBits, 20);
  Rng rng(405);
  SampleSet gen(512, 20), target(512, 20);
  std::vector<int> seed(10);
  for (std::size_t i = 0; i < 512; ++i) {
    for (auto& v : seed) v = rng.sign();
    const auto y = prg.eval(seed);
    std::copy(y.begin(), y.end(), gen.row(i));
    for (std::size_t j = 0; j < 20; ++j) target.at(i, j) = rng.sign();
  }
  const double w1 = w1_empirical(gen, target, {.cap = 2048, .threads = 0});
  const double secs = seconds_since(t0);
  const double expected = 2.0 * (1.0 - std::ldexp(1.0, -10));
  std::ostringstream d;
  d << "beta(2^10) = " << cert_full.beta << " (expected " << expected << "), beta(image " << prg_image(prg).size()
    << ") = " << cert.beta << ", empirical W1 = " << w1 << ", " << secs << " s";
  return {std::abs(cert_full.beta - expected) < 1e-15 && cert.beta >= cert_full.beta && cert_full.beta >= 1.0 &&
              verify_certificate(cert_full) && w1 >= 0.5 && secs < 120.0,
          d.str()};
}

// 5. MLP discriminators against the m=50, d=200 TSA PRG, plus the control.
Outcome criterion5() {
  const auto t0 = Clock::now();
  const auto cfg = load_experiment_config(std::string(FORGE_SOURCE_DIR) + "/configs/figure1.json");
  const auto control_cfg = load_experiment_config(std::string(FORGE_SOURCE_DIR) + "/configs/control.json");
  const LocalPrg prg(sample_hypergraph(cfg.prg->m, cfg.prg->d, cfg.prg->k, stage_seed(cfg, "prg")), tsa_predicate());
  const auto gen = prg_sampler(prg);
  const auto uniform = biased_bits_sampler(cfg.prg->d);
  const auto& depths = cfg.attack->depths;
  std::vector<AttackReport> reports(depths.size() + 1);
  parallel_for(depths.size() + 1, 0, [&](std::size_t i) {
    if (i == depths.size()) {
      TrainConfig t = control_cfg.attack->train;
      t.hidden_layers = 1;
      t.seed = derive_seed(stage_seed(control_cfg, "attack"), 1);
      reports[i] = train_discriminator(t, biased_bits_sampler(200, 0.75), biased_bits_sampler(200)).report;
      return;
    }
    TrainConfig t = cfg.attack->train;
    t.hidden_layers = depths[i];
    t.seed = derive_seed(stage_seed(cfg, "attack"), depths[i]);
    reports[i] = train_discriminator(t, gen, uniform).report;
  });
  const double secs = seconds_since(t0);
  std::size_t loss_ok = 0;
  bool acc_ok = true;
  std::ostringstream d;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const auto& r = reports[i];
    const std::size_t from = (cfg.attack->train.steps * 3) / 4;
    double min_loss = INFINITY;
    for (const auto& p : r.loss_curve) {
      if (p.step >= from) min_loss = std::min(min_loss, p.test_loss);
    }
    const double acc = r.details.value("balanced_accuracy", 1.0);
    loss_ok += r.status == "ok" && min_loss > -0.1;
    acc_ok = acc_ok && r.status == "ok" && acc <= 0.55;
    d << "depth " << depths[i] << ": min late loss " << min_loss << ", acc " << acc << "; ";
  }
  const double control_acc = reports.back().details.value("balanced_accuracy", 0.0);
  d << "control acc " << control_acc << "; " << secs << " s";
  return {loss_ok >= 3 && acc_ok && control_acc >= 0.7 && secs <= 45 * 60, d.str()};
}

// 6. Threshold scan on N(0,1) vs N(0.5,1).
Outcome criterion6() {
  // Oracle: optimal threshold 0.25; advantage = integral of the N(0,1) density over [-0.25, 0.25].
  const int steps = 20000;
  double oracle = 0.0;
  const double h = 0.5 / steps;
  for (int i = 0; i <= steps; ++i) {
    const double t = -0.25 + i * h;
    const double w = (i == 0 || i == steps) ? 1 : (i % 2 ? 4 : 2);
    oracle += w * std::exp(-t * t / 2) / std::sqrt(2 * M_PI);
  }
  oracle *= h / 3;
  Rng rx(601), ry(602);
  std::vector<double> x(100000), y(100000);
  for (auto& v : x) v = rx.normal();
  for (auto& v : y) v = 0.5 + ry.normal();
  const auto r = threshold_scan(x, y);
  std::ostringstream d;
  d << "advantage " << r.advantage << ", oracle " << oracle << ", threshold " << *r.threshold;
  return {std::abs(r.advantage - 0.197) <= 0.015 && std::abs(oracle - 0.197) < 1e-3, d.str()};
}

// 7. Agreement bound on 50 enumerable instances with random LTF classifiers.
Outcome criterion7() {
  Rng rng(707);
  std::size_t fails = 0, injective = 0, equal = 0, strict = 0;
  double worst = -INFINITY;
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = 2 + rng.uniform_below(7);
    const std::size_t d = m + 1 + rng.uniform_below(16 - m);
    const std::size_t k = 1 + rng.uniform_below(std::min<std::size_t>(5, m));
    const HardFunction h(LocalPrg(sample_hypergraph(m, d, k, rng.next_u64()), random_predicate(static_cast<unsigned>(k), rng)));
    std::vector<std::size_t> widths;
    const std::size_t depth = 1 + rng.uniform_below(3);
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(1 + rng.uniform_below(4));
    const auto f = classifier_from_circuit(random_layered_circuit(d, widths, rng));
    const auto r = check_hardness_bound(f, h, 0);
    fails += !r.holds;
    worst = std::max(worst, r.lhs - r.rhs);
    const auto c = check_hardness_bound([](const std::vector<int>&) { return 1; }, h, 0);
    fails += !c.holds;
    if (h.injective()) {
      ++injective;
      equal += std::abs(c.lhs - c.rhs) <= hardness_slack;
    } else {
      strict += c.lhs < c.rhs;
    }
  }
  std::ostringstream d;
  d << "50 instances, " << fails << " violations, max lhs-rhs " << worst << "; constant f: equality on " << equal << "/"
    << injective << " injective instances, strict inequality on " << strict << "/" << 50 - injective << " non-injective";
  return {fails == 0 && equal == injective && injective > 0 && strict == 50 - injective, d.str()};
}

// 8. Leaky target certificate and the small-ball Monte Carlo check.
Outcome criterion8() {
  const TargetModel t = sample_target({20, 24, 30}, 0.25, 808);
  const auto cert = certify_target(t);
  const LevyBound b = certificate_levy(cert);
  Rng rng(809);
  const std::size_t n = 10000;
  SampleSet pushed(n, 30);
  std::vector<double> x(20);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = rng.uniform01();
    const auto y = t.H.eval_float(x);
    std::copy(y.begin(), y.end(), pushed.row(i));
  }
  const double mass = max_ball_mass(pushed, b.r, 0);
  const double limit = b.alpha + 3.0 * std::sqrt(b.alpha * (1.0 - b.alpha) / static_cast<double>(n));
  std::ostringstream d;
  d << "beta " << cert.beta << ", N " << cert.N << ", r_L " << b.r << ", alpha_L " << b.alpha << ", max ball mass " << mass
    << " (limit " << limit << ")";
  return {cert.beta > 0.0 && verify_certificate(cert) && mass <= limit, d.str()};
}

// 9. Compiled LTF circuits agree with the circuits on every input.
Outcome criterion9() {
  Rng rng(909);
  std::size_t wrong = 0, points = 0;
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 2 + rng.uniform_below(11);
    std::vector<std::size_t> widths;
    const std::size_t depth = 1 + rng.uniform_below(4);
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(1 + rng.uniform_below(5));
    const LtfCircuit c = random_layered_circuit(n, widths, rng);
    const ReluNet net = ltf_to_relu(c);
    for (std::uint64_t v = 0; v < (std::uint64_t{1} << n); ++v) {
      const auto xv = unpack_point(v, n);
      wrong += !(net.eval_exact(fixed_pm(xv))[0] == FixedScalar(c.eval(xv)));
      ++points;
    }
  }
  std::ostringstream d;
  d << "30 circuits, " << points << " inputs, " << wrong << " disagreements";
  return {wrong == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 predicate compiler exactness", criterion1}, {"2 composition accounting", criterion2},
      {"3 decoder fidelity", criterion3},             {"4 wasserstein gap", criterion4},
      {"5 mlp discriminators", criterion5},           {"6 threshold scan calibration", criterion6},
      {"7 hardness bound", criterion7},               {"8 diversity certificate", criterion8},
      {"9 ltf to relu soundness", criterion9}};
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
