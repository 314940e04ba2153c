#pragma once

// Wasserstein separation: empirical W1 by exact assignment, and (N, beta)
// diversity certificates. A distribution is (N, beta)-diverse when every
// distribution on at most N points is at least beta away from it in W1.

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/assignment.hpp"
#include "forge/error.hpp"
#include "forge/generator.hpp"
#include "forge/parallel.hpp"
#include "forge/sample_set.hpp"

namespace forge {

struct CertificateStep {
  std::string step;
  nlohmann::json inputs;
  nlohmann::json outputs;
};

struct DiversityCertificate {
  double N = 0.0;  // support bound; may exceed 2^53, so kept as a double
  double beta = 0.0;
  std::vector<CertificateStep> trace;
  std::vector<std::string> warnings;
};

struct LevyBound {
  double r = 0.0;
  double alpha = 1.0;  // Q_D(r) <= alpha
};

struct W1Options {
  std::size_t cap = 2048;
  std::size_t threads = 1;
};

// Exact W1 between the empirical measures of two equal-size samples. Larger
// or unequal sets are truncated to their first min(n_p, n_q, cap) rows.
inline double w1_empirical(const SampleSet& p, const SampleSet& q, const W1Options& opt = {}) {
  detail::require(p.n >= 1 && q.n >= 1, "W1 needs non-empty sample sets");
  detail::require(p.d == q.d, "W1 sample dimensions differ");
  const std::size_t n = std::min({p.n, q.n, opt.cap});
  std::vector<double> cost(n * n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    const double* a = p.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = q.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < p.d; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
      cost[i * n + j] = std::sqrt(s);
    }
  });
  return solve_assignment(cost, n).cost / static_cast<double>(n);
}

// Exact W2 between equal-size empirical measures (same truncation as W1).
inline double w2_empirical(const SampleSet& p, const SampleSet& q, const W1Options& opt = {}) {
  detail::require(p.n >= 1 && q.n >= 1, "W2 needs non-empty sample sets");
  detail::require(p.d == q.d, "W2 sample dimensions differ");
  const std::size_t n = std::min({p.n, q.n, opt.cap});
  std::vector<double> cost(n * n);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < p.d; ++c) s += (p.at(i, c) - q.at(j, c)) * (p.at(i, c) - q.at(j, c));
      cost[i * n + j] = s;
    }
  });
  return std::sqrt(solve_assignment(cost, n).cost / static_cast<double>(n));
}

// Points alpha apart, N of N' equally likely: beta = alpha (1 - N/N').
inline DiversityCertificate diversity_from_separation(double alpha_sep, double N, double N_prime) {
  detail::require(alpha_sep > 0.0, "separation must be positive");
  detail::require(N >= 0.0 && N <= N_prime, "N must lie in [0, N']");
  DiversityCertificate c;
  c.N = N;
  c.beta = alpha_sep * (1.0 - N / N_prime);
  c.trace.push_back({"separation", {{"alpha", alpha_sep}, {"N", N}, {"N_prime", N_prime}}, {{"N", c.N}, {"beta", c.beta}}});
  return c;
}

// Small-ball mass of I_d: Q(r) <= (18 r^2 / d)^{d/2}, clipped to 1.
inline LevyBound levy_box(std::size_t d, double r) {
  detail::require(d >= 1, "dimension must be positive");
  detail::require(r > 0.0, "radius must be positive");
  const double dd = static_cast<double>(d);
  return {r, std::min(1.0, std::pow(18.0 * r * r / dd, dd / 2.0))};
}

inline DiversityCertificate levy_to_diversity(const LevyBound& b, double N) {
  detail::require(N >= 0.0, "N must be non-negative");
  DiversityCertificate c;
  c.N = N;
  c.beta = std::max(0.0, b.r * (1.0 - N * b.alpha));
  c.trace.push_back({"levy_to_diversity", {{"r", b.r}, {"alpha", b.alpha}, {"N", N}}, {{"N", c.N}, {"beta", c.beta}}});
  return c;
}

// Largest beta over r for I_d at support size N (grid over r in (0, sqrt(d/18)]).
inline DiversityCertificate box_diversity(std::size_t d, double N) {
  const double r_max = std::sqrt(static_cast<double>(d) / 18.0);
  LevyBound best = levy_box(d, r_max);
  double best_beta = -1.0;
  for (int i = 1; i <= 4000; ++i) {
    const LevyBound b = levy_box(d, r_max * i / 4000.0);
    const double beta = b.r * (1.0 - N * b.alpha);
    if (beta > best_beta) {
      best_beta = beta;
      best = b;
    }
  }
  DiversityCertificate c = levy_to_diversity(best, N);
  c.trace.insert(c.trace.begin(), {"levy_box", {{"d", d}, {"r", best.r}}, {{"alpha", best.alpha}}});
  return c;
}

// Radius/mass recursion through a random expansive leaky network, using the
// measured smallest singular values in place of their high-probability bounds.
// A linear map with sigma_min s sends radius-s r balls back into radius-r
// balls; the leaky activation costs a factor lambda in radius and 2^k in mass.
inline DiversityCertificate certify_leaky_target(const std::vector<std::size_t>& dims, double leak,
                                                 const std::vector<double>& sigma_min, double r0 = 1.0 / 3.0) {
  detail::require(!dims.empty(), "target dims must be non-empty");
  detail::require(sigma_min.size() + 1 == dims.size(), "need one sigma_min per weight matrix");
  detail::require(r0 > 0.0, "initial radius must be positive");
  DiversityCertificate c;
  LevyBound b = levy_box(dims.front(), r0);
  c.trace.push_back({"levy_box", {{"d", dims.front()}, {"r", r0}}, {{"alpha", b.alpha}}});
  for (std::size_t i = 0; i < sigma_min.size(); ++i) {
    const double s = sigma_min[i];
    detail::require(std::isfinite(s), "sigma_min must be finite");
    if (s <= 1e-12) {
      throw RefusedError("layer " + std::to_string(i + 1) + " has sigma_min " + std::to_string(s) +
                         "; the weight matrix is not injective, so no certificate can be issued");
    }
    const double ki = static_cast<double>(dims[i + 1]);
    const double kprev = static_cast<double>(dims[i]);
    const double gamma = ki / kprev - 1.0;  // k_i = (1 + gamma) k_{i-1}
    if (s < gamma / (2.0 * (1.0 + gamma))) {
      c.warnings.push_back("layer " + std::to_string(i + 1) + ": sigma_min " + std::to_string(s) + " is below gamma/(2(1+gamma)) = " +
                           std::to_string(gamma / (2.0 * (1.0 + gamma))));
    }
    if (i > 0) {
      const double r_in = b.r;
      const double a_in = b.alpha;
      b.r *= leak;
      b.alpha = std::min(1.0, b.alpha * std::ldexp(1.0, static_cast<int>(dims[i])));
      c.trace.push_back({"leaky_push", {{"r", r_in}, {"alpha", a_in}, {"leak", leak}, {"k", dims[i]}}, {{"r", b.r}, {"alpha", b.alpha}}});
    }
    const double r_in = b.r;
    b.r *= s;
    c.trace.push_back({"linear_push", {{"r", r_in}, {"alpha", b.alpha}, {"sigma_min", s}, {"layer", i + 1}}, {{"r", b.r}, {"alpha", b.alpha}}});
  }
  const double N = std::floor(1.0 / (2.0 * b.alpha));
  const DiversityCertificate tail = levy_to_diversity(b, N);
  c.N = tail.N;
  c.beta = tail.beta;
  c.trace.insert(c.trace.end(), tail.trace.begin(), tail.trace.end());
  return c;
}

inline DiversityCertificate certify_target(const TargetModel& t, double r0 = 1.0 / 3.0) {
  if (t.kind == "identity") return certify_leaky_target({t.r}, 0.5, {}, r0);
  detail::require(t.kind == "leaky", "only identity and leaky targets can be certified");
  return certify_leaky_target(t.dims, t.leak, t.sigma_min, r0);
}

// Final radius and mass of a certificate from certify_leaky_target.
inline LevyBound certificate_levy(const DiversityCertificate& c) {
  for (auto it = c.trace.rbegin(); it != c.trace.rend(); ++it) {
    if (it->step == "levy_to_diversity") return {it->inputs.at("r").get<double>(), it->inputs.at("alpha").get<double>()};
  }
  throw ValidationError("certificate has no concentration step");
}

// Recomputes every step from its inputs; true when all outputs agree.
inline bool verify_certificate(const DiversityCertificate& c, double tol = 1e-12) {
  if (c.trace.empty() || c.beta < 0.0) return false;
  auto close = [&](double a, double b) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); };
  for (const auto& s : c.trace) {
    const auto& in = s.inputs;
    const auto& out = s.outputs;
    if (s.step == "separation") {
      const auto r = diversity_from_separation(in.at("alpha"), in.at("N"), in.at("N_prime"));
      if (!close(r.beta, out.at("beta"))) return false;
    } else if (s.step == "levy_box") {
      if (!close(levy_box(in.at("d"), in.at("r")).alpha, out.at("alpha"))) return false;
    } else if (s.step == "levy_to_diversity") {
      const auto r = levy_to_diversity({in.at("r"), in.at("alpha")}, in.at("N"));
      if (!close(r.beta, out.at("beta"))) return false;
    } else if (s.step == "leaky_push") {
      const double alpha = std::min(1.0, in.at("alpha").get<double>() * std::ldexp(1.0, in.at("k").get<int>()));
      if (!close(in.at("r").get<double>() * in.at("leak").get<double>(), out.at("r")) || !close(alpha, out.at("alpha"))) return false;
    } else if (s.step == "linear_push") {
      if (!close(in.at("r").get<double>() * in.at("sigma_min").get<double>(), out.at("r"))) return false;
    } else {
      return false;
    }
  }
  return true;
}

// eps sqrt(n). This is a valid bound on W1(p^n, q^n) when eps bounds
// W2(p, q); a W1 bound on (p, q) alone only gives n eps (see below).
inline double tensorize_w1(double eps, std::size_t n) {
  detail::require(eps >= 0.0, "eps must be non-negative");
  detail::require(n >= 1, "n must be at least 1");
  return eps * std::sqrt(static_cast<double>(n));
}

// Coordinatewise coupling plus |x|_2 <= |x|_1: W1(p^n, q^n) <= n W1(p, q).
inline double tensorize_w1_from_w1(double eps, std::size_t n) {
  detail::require(eps >= 0.0, "eps must be non-negative");
  detail::require(n >= 1, "n must be at least 1");
  return eps * static_cast<double>(n);
}

// Analytic targets for support_gap_lower_bound.
enum class AnalyticTarget { CubeBits, UnitBox };

// W1 lower bound between any distribution on `support` and the target.
inline DiversityCertificate support_gap_lower_bound(std::size_t support_size, AnalyticTarget target, std::size_t d) {
  const double N = static_cast<double>(support_size);
  if (target == AnalyticTarget::CubeBits) {
    // Distinct points of {+-1}^d are at least 2 apart.
    return diversity_from_separation(2.0, N, std::ldexp(1.0, static_cast<int>(d)));
  }
  return box_diversity(d, N);
}

// Empirical target: treated as uniform on its distinct points.
inline DiversityCertificate support_gap_lower_bound(const SampleSet& support, const SampleSet& target) {
  detail::require(support.d == target.d, "support and target dimensions differ");
  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < target.n; ++i) distinct.insert(std::vector<double>(target.row(i), target.row(i) + target.d));
  std::set<std::vector<double>> gen;
  for (std::size_t i = 0; i < support.n; ++i) gen.insert(std::vector<double>(support.row(i), support.row(i) + support.d));
  detail::require(distinct.size() >= 2, "target needs at least two distinct points");
  const std::vector<std::vector<double>> pts(distinct.begin(), distinct.end());
  double sep = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < target.d; ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
      sep = std::min(sep, std::sqrt(s));
    }
  }
  const double N = std::min(static_cast<double>(gen.size()), static_cast<double>(pts.size()));
  return diversity_from_separation(sep, N, static_cast<double>(pts.size()));
}

// Largest empirical mass of a radius-r ball centred at a sample point.
inline double max_ball_mass(const SampleSet& s, double r, std::size_t threads = 1) {
  std::vector<std::size_t> counts(s.n, 0);
  const double r2 = r * r;
  parallel_for(s.n, threads, [&](std::size_t i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < s.n; ++j) {
      double dist = 0.0;
      for (std::size_t k = 0; k < s.d && dist <= r2; ++k) dist += (s.at(i, k) - s.at(j, k)) * (s.at(i, k) - s.at(j, k));
      c += dist <= r2;
    }
    counts[i] = c;
  });
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(s.n);
}

inline nlohmann::json certificate_to_json(const DiversityCertificate& c) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : c.trace) trace.push_back({{"step", s.step}, {"inputs", s.inputs}, {"outputs", s.outputs}});
  return {{"schema", "forge.certificate"}, {"version", 1}, {"N", c.N}, {"log2_N", std::log2(std::max(c.N, 1.0))},
          {"beta", c.beta}, {"trace", trace}, {"warnings", c.warnings}};
}

inline DiversityCertificate certificate_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.value("schema", "") == "forge.certificate", "not a forge.certificate document");
  DiversityCertificate c;
  c.N = j.at("N").get<double>();
  c.beta = j.at("beta").get<double>();
  for (const auto& s : j.at("trace")) c.trace.push_back({s.at("step").get<std::string>(), s.at("inputs"), s.at("outputs")});
  if (j.contains("warnings")) c.warnings = j.at("warnings").get<std::vector<std::string>>();
  return c;
}

}  // namespace forge
