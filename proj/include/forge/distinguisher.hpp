#pragma once

// Attacks on generators: the threshold scan on a scalar statistic, sub-Gaussian
// scale accounting for Lipschitz statistics, and F-IPM estimates over a fixed
// family of networks.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/relu_net.hpp"
#include "forge/sample_set.hpp"

namespace forge {

struct LossPoint {
  std::size_t step = 0;
  double test_loss = 0.0;
  double accuracy = 0.0;
};

struct AttackReport {
  std::string method;
  double advantage = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_gen = 0;
  std::size_t n_target = 0;
  std::optional<double> threshold;
  std::vector<LossPoint> loss_curve;
  std::string status = "ok";
  nlohmann::json details = nlohmann::json::object();
};

inline nlohmann::json report_to_json(const AttackReport& r) {
  nlohmann::json j = {{"schema", "forge.attack"}, {"version", 1}, {"method", r.method}, {"advantage", r.advantage},
                      {"ci_low", r.ci_low}, {"ci_high", r.ci_high}, {"n_gen", r.n_gen}, {"n_target", r.n_target},
                      {"status", r.status}, {"details", r.details}};
  if (r.threshold) j["threshold"] = *r.threshold;
  if (!r.loss_curve.empty()) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : r.loss_curve) curve.push_back({{"step", p.step}, {"test_loss", p.test_loss}, {"accuracy", p.accuracy}});
    j["loss_curve"] = curve;
  }
  return j;
}

inline void write_loss_curve_csv(const std::vector<LossPoint>& curve, std::ostream& out) {
  out << "step,test_loss,accuracy\n";
  for (const auto& p : curve) out << p.step << "," << format_double(p.test_loss) << "," << format_double(p.accuracy) << "\n";
}

// DKW: sup_t |F_n(t) - F(t)| <= sqrt(ln(2/delta) / (2n)) with probability 1 - delta.
inline double dkw_radius(std::size_t n, double delta) {
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

struct ScanOptions {
  double confidence = 0.95;
  // Only thresholds inside [lo, hi] are considered when set.
  std::optional<double> window_lo;
  std::optional<double> window_hi;
};

// max_t |Pr[X > t] - Pr[Y > t]| over midpoints of the pooled sorted samples.
// The CI splits 1 - confidence evenly between the two DKW bands.
inline AttackReport threshold_scan(std::vector<double> x, std::vector<double> y, const ScanOptions& opt = {}) {
  detail::require(!x.empty() && !y.empty(), "threshold scan needs non-empty samples");
  for (double v : x) detail::require(std::isfinite(v), "samples must be finite");
  for (double v : y) detail::require(std::isfinite(v), "samples must be finite");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::vector<double> pooled;
  pooled.reserve(x.size() + y.size());
  std::merge(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(pooled));
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  AttackReport r;
  r.method = "threshold-scan";
  r.n_gen = x.size();
  r.n_target = y.size();
  double best = 0.0;
  std::optional<double> best_t;
  std::size_t ix = 0, iy = 0;
  // Thresholds below every sample give zero advantage; the scan starts there.
  for (std::size_t k = 0; k + 1 < pooled.size(); ++k) {
    const double t = 0.5 * (pooled[k] + pooled[k + 1]);
    while (ix < x.size() && x[ix] <= t) ++ix;
    while (iy < y.size() && y[iy] <= t) ++iy;
    if (opt.window_lo && t < *opt.window_lo) continue;
    if (opt.window_hi && t > *opt.window_hi) continue;
    const double adv = std::abs((nx - static_cast<double>(ix)) / nx - (ny - static_cast<double>(iy)) / ny);
    if (adv > best) {
      best = adv;
      best_t = t;
    }
  }
  r.advantage = best;
  r.threshold = best_t;
  const double delta = (1.0 - opt.confidence) / 2.0;
  const double slack = dkw_radius(x.size(), delta) + dkw_radius(y.size(), delta);
  r.ci_low = std::max(0.0, best - slack);
  r.ci_high = std::min(1.0, best + slack);
  r.details = {{"dkw_slack", slack}, {"confidence", opt.confidence}};
  return r;
}

// A Lambda-Lipschitz statistic of n independent bounded coordinates is
// Lambda sqrt(2n)-sub-Gaussian.
inline double subgaussian_scale(double lipschitz, double n) {
  detail::require(lipschitz > 0.0 && std::isfinite(lipschitz), "Lipschitz constant must be positive");
  detail::require(n > 0.0, "n must be positive");
  return lipschitz * std::sqrt(2.0 * n);
}

// Window [E X - w, E Y + w] with w = sigma sqrt(2 ln(max(e, sigma/alpha))),
// outside of which a threshold test loses at most about alpha.
inline std::pair<double, double> scan_window(double mean_x, double mean_y, double sigma, double alpha) {
  detail::require(sigma > 0.0 && alpha > 0.0, "scan window needs positive sigma and alpha");
  const double w = sigma * std::sqrt(2.0 * std::log(std::max(std::exp(1.0), sigma / alpha)));
  return {std::min(mean_x, mean_y) - w, std::max(mean_x, mean_y) + w};
}

// max over the family of |E_p f - E_q f|. Each f has range at most
// Lambda_f * diam, where diam is the diameter of the bounding box of all
// samples; Hoeffding with a Bonferroni split gives the CI.
inline AttackReport ipm_report(const std::vector<ReluNet>& family, const SampleSet& p, const SampleSet& q, double confidence = 0.95) {
  detail::require(!family.empty(), "IPM family must be non-empty");
  detail::require(p.n >= 1 && q.n >= 1, "IPM needs non-empty sample sets");
  detail::require(p.d == q.d, "IPM sample dimensions differ");
  for (const auto& f : family) {
    detail::require(f.d_in() == p.d && f.d_out() == 1, "IPM family nets must map R^d to R");
  }
  double diam2 = 0.0;
  for (std::size_t c = 0; c < p.d; ++c) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t i = 0; i < p.n; ++i) lo = std::min(lo, p.at(i, c)), hi = std::max(hi, p.at(i, c));
    for (std::size_t i = 0; i < q.n; ++i) lo = std::min(lo, q.at(i, c)), hi = std::max(hi, q.at(i, c));
    diam2 += (hi - lo) * (hi - lo);
  }
  const double diam = std::sqrt(diam2);
  const double delta = (1.0 - confidence) / static_cast<double>(family.size());
  const double scale = std::sqrt(std::log(2.0 / delta) / 2.0) *
                       std::sqrt(1.0 / static_cast<double>(p.n) + 1.0 / static_cast<double>(q.n));
  AttackReport r;
  r.method = "custom-net";
  r.n_gen = p.n;
  r.n_target = q.n;
  nlohmann::json per_f = nlohmann::json::array();
  double best = 0.0, best_half = 0.0;
  for (const auto& f : family) {
    double mp = 0.0, mq = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) mp += f.eval_float(std::vector<double>(p.row(i), p.row(i) + p.d))[0];
    for (std::size_t i = 0; i < q.n; ++i) mq += f.eval_float(std::vector<double>(q.row(i), q.row(i) + q.d))[0];
    const double gap = std::abs(mp / static_cast<double>(p.n) - mq / static_cast<double>(q.n));
    const double half = f.profile().lambda * diam * scale;
    per_f.push_back({{"gap", gap}, {"half_width", half}, {"lipschitz", f.profile().lambda}});
    if (gap >= best) {
      best = gap;
      best_half = half;
    }
  }
  r.advantage = best;
  r.ci_low = std::max(0.0, best - best_half);
  r.ci_high = best + best_half;
  r.details = {{"per_function", per_f}, {"diameter", diam}, {"confidence", confidence}};
  return r;
}

}  // namespace forge
