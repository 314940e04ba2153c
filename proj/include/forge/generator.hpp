#pragma once

// Hard generators G = H o J o G' o h_xi: a clamp front-end turning continuous
// seeds into near-bits, the PRG networks (or a projection when the seed is long
// enough), the bit decoder J and the target pushforward H.

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "forge/compiler.hpp"
#include "forge/error.hpp"
#include "forge/goldreich.hpp"
#include "forge/parallel.hpp"
#include "forge/relu_net.hpp"
#include "forge/relu_net_json.hpp"
#include "forge/rng.hpp"
#include "forge/sample_set.hpp"

namespace forge {

enum class SeedKind { Bits, Gaussian, UnitBox };

inline std::string to_string(SeedKind k) {
  switch (k) {
    case SeedKind::Bits: return "bits";
    case SeedKind::Gaussian: return "gaussian";
    case SeedKind::UnitBox: return "unit-box";
  }
  return "bits";
}

inline SeedKind seed_kind_from_string(const std::string& s) {
  if (s == "bits") return SeedKind::Bits;
  if (s == "gaussian") return SeedKind::Gaussian;
  if (s == "unit-box") return SeedKind::UnitBox;
  throw ValidationError("unknown seed kind '" + s + "' (expected bits, gaussian or unit-box)");
}

inline void draw_seed(SeedKind kind, Rng& rng, std::vector<double>& x) {
  for (auto& v : x) {
    switch (kind) {
      case SeedKind::Bits: v = rng.sign(); break;
      case SeedKind::Gaussian: v = rng.normal(); break;
      case SeedKind::UnitBox: v = rng.uniform(-1.0, 1.0); break;
    }
  }
}

// n = ceil(log2(1/eps)) bits per decoded coordinate.
inline unsigned decoder_bits(double eps) {
  detail::require(eps > 0.0 && eps < 1.0, "epsilon must lie in (0, 1)");
  unsigned n = 0;
  while (std::ldexp(1.0, -static_cast<int>(n)) > eps) ++n;
  return n;
}

// Coordinate i is <w, y_block + 1> with w = (1/4, ..., 1/2^{n+1}); bits past
// the last full block are dropped.
inline ReluNet build_bit_decoder(std::size_t s, double eps) {
  const unsigned n = decoder_bits(eps);
  const std::size_t r = s / n;
  detail::require(r >= 1, "decoder needs at least " + std::to_string(n) + " input bits");
  std::vector<Triplet> t;
  FixedVector bias(r);
  for (std::size_t i = 0; i < r; ++i) {
    for (unsigned j = 0; j < n; ++j) {
      const FixedScalar w = FixedScalar::pow2(-static_cast<int>(j) - 2);
      t.push_back({i, i * n + j, w});
      bias[i] += w;
    }
  }
  return ReluNet({Layer{SparseMatrix::from_triplets(r, s, std::move(t)), std::move(bias)}});
}

// xi' = eps / (Lambda'' c sqrt(m^3 d)), where c bounds the density of |x_i|
// near 0: sqrt(2/pi) for Gaussian seeds and 1 for seeds uniform on [-1, 1].
inline double frontend_xi_prime(std::size_t m, double eps, double lambda_downstream, std::size_t d, SeedKind kind) {
  detail::require(lambda_downstream > 0.0 && std::isfinite(lambda_downstream), "downstream Lipschitz bound must be positive");
  const double c = kind == SeedKind::Gaussian ? std::sqrt(2.0 / std::numbers::pi) : 1.0;
  const double md = static_cast<double>(m);
  return eps / (lambda_downstream * std::sqrt(c * c * md * md * md * static_cast<double>(d)));
}

inline BigInt frontend_slope(double xi_prime) {
  detail::require(xi_prime > 0.0 && std::isfinite(xi_prime), "xi' must be positive");
  const double q = std::ceil(1.0 / xi_prime);
  detail::require(q < 0x1.0p1000, "front-end slope is out of range");
  // q is an integer, so its canonical form has tau = 0.
  return FixedScalar::from_double(q).mantissa();
}

inline ReluNet build_frontend(std::size_t m, const BigInt& q) { return entrywise_clamp(m, q); }

struct TargetModel {
  std::string kind = "identity";  // identity, leaky or net
  ReluNet H;
  std::size_t r = 0;
  std::size_t d = 0;
  std::vector<std::size_t> dims;
  double leak = 0.0;
  std::optional<std::uint64_t> rng_seed;
  std::vector<SparseMatrix> weights;
  std::vector<double> sigma_min;
};

inline TargetModel identity_target(std::size_t r) {
  TargetModel t;
  t.H = identity_net(r);
  t.r = t.d = r;
  t.dims = {r};
  return t;
}

inline TargetModel net_target(ReluNet H) {
  TargetModel t;
  t.kind = "net";
  t.r = H.d_in();
  t.d = H.d_out();
  t.dims = {t.r, t.d};
  t.H = std::move(H);
  return t;
}

inline double matrix_sigma_min(const SparseMatrix& w) { return sigma_min(w.to_eigen()); }

// Random leaky-ReLU network with N(0, 1/k_i) weights on layer i.
inline TargetModel sample_target(const std::vector<std::size_t>& dims, double leak, std::uint64_t seed) {
  detail::require(!dims.empty() && dims.front() >= 1, "target dims must be non-empty and positive");
  detail::require(leak > 0.0 && leak <= 0.5, "leak must lie in (0, 1/2]");
  for (std::size_t i = 1; i < dims.size(); ++i) {
    detail::require(static_cast<double>(dims[i]) >= 1.1 * static_cast<double>(dims[i - 1]),
                    "target dims must expand by a factor of at least 1.1 per layer");
  }
  if (dims.size() == 1) {
    TargetModel t = identity_target(dims.front());
    t.leak = leak;
    t.rng_seed = seed;
    return t;
  }
  Rng rng(seed);
  TargetModel t;
  t.kind = "leaky";
  t.dims = dims;
  t.leak = leak;
  t.rng_seed = seed;
  t.r = dims.front();
  t.d = dims.back();
  for (std::size_t i = 1; i < dims.size(); ++i) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::vector<FixedScalar> w(dims[i] * dims[i - 1]);
    for (auto& v : w) v = FixedScalar::from_double(sd * rng.normal());
    t.weights.push_back(SparseMatrix::from_dense(dims[i], dims[i - 1], w));
    t.sigma_min.push_back(matrix_sigma_min(t.weights.back()));
  }
  t.H = leaky_to_relu(t.weights, FixedScalar::from_double(leak));
  return t;
}

struct StageAccounting {
  std::size_t L_formula = 0;
  std::size_t S_formula = 0;
  unsigned tau_claim = 0;
  std::vector<std::string> bounds;
};

struct GeneratorSpec {
  std::size_t m = 0;
  std::size_t d = 0;
  double epsilon = 0.0;
  SeedKind seed_kind = SeedKind::Bits;
  LocalPrg prg;
  TargetModel target;
  bool projection = false;
  unsigned decoder_n = 0;
  std::size_t s = 0;  // bits fed to the decoder
  std::optional<BigInt> frontend_q;
  double xi_prime = 0.0;
  ReluNet decoder;
  std::optional<ReluNet> frontend;
  ReluNet bit_net;  // G0 = H o J o G' on {+-1}^m
  ReluNet net;      // the full generator
  StageAccounting accounting;

  double xi() const { return frontend_q ? 1.0 / frontend_q->convert_to<double>() : 0.0; }
};

namespace detail {

inline std::vector<ReluNet> coordinates(const ReluNet& net) {
  std::vector<ReluNet> out;
  out.reserve(net.d_out());
  for (std::size_t i = 0; i < net.d_out(); ++i) out.push_back(output_coordinate(net, i));
  return out;
}

}  // namespace detail

inline GeneratorSpec assemble(const LocalPrg& prg, const TargetModel& target, SeedKind seed_kind, double eps) {
  GeneratorSpec g;
  g.m = prg.m();
  g.d = target.d;
  g.epsilon = eps;
  g.seed_kind = seed_kind;
  g.prg = prg;
  g.target = target;
  g.decoder_n = decoder_bits(eps);
  g.s = target.r * g.decoder_n;

  std::vector<ReluNet> prime;
  if (g.s <= prg.d()) {
    const auto nets = realize_networks(prg);
    prime.assign(nets.begin(), nets.begin() + static_cast<std::ptrdiff_t>(g.s));
  } else if (g.s <= g.m) {
    g.projection = true;
    for (std::size_t i = 0; i < g.s; ++i) prime.push_back(coordinate_net(g.m, i));
  } else {
    throw ValidationError("decoder needs " + std::to_string(g.s) + " bits but the PRG gives " + std::to_string(prg.d()) +
                          " and the seed has " + std::to_string(g.m));
  }
  g.decoder = build_bit_decoder(g.s, eps);

  // J' = H o J; decoder outputs lie in [0, 1).
  const auto j_coords = detail::coordinates(g.decoder);
  const ReluNet j_prime = compose(j_coords, target.H, {.input_box = std::nullopt, .inner_ranges = std::vector<Interval>(target.r, Interval{0, 1})});
  ComposeReport g0_report;
  g.bit_net = compose(prime, j_prime, {}, &g0_report);

  const std::size_t L_prime = g0_report.L1;
  const std::size_t S_prime = g0_report.S1;
  g.accounting.L_formula = L_prime + 1 + target.H.depth();
  g.accounting.S_formula = (S_prime + 1) * g.s + target.r + target.H.profile().S;
  g.accounting.tau_claim = std::max({g0_report.tau1, j_prime.profile().tau});

  if (seed_kind == SeedKind::Bits) {
    g.net = g.bit_net;
  } else {
    g.xi_prime = frontend_xi_prime(g.m, eps, g.bit_net.profile().lambda, g.d, seed_kind);
    g.frontend_q = frontend_slope(g.xi_prime);
    g.frontend = build_frontend(g.m, *g.frontend_q);
    // Coordinate i of the front-end reads only x_i.
    std::vector<ReluNet> f_coords;
    const ReluNet clamp = clamp_net(*g.frontend_q);
    for (std::size_t i = 0; i < g.m; ++i) f_coords.push_back(select_inputs(clamp, {i}, g.m));
    ComposeReport report;
    g.net = compose(f_coords, g.bit_net, {.input_box = std::nullopt, .inner_ranges = std::vector<Interval>(g.m, Interval{-1, 1})}, &report);
    g.accounting.L_formula += 2;
    g.accounting.S_formula += 3 * g.m;
    g.accounting.tau_claim = std::max(g.accounting.tau_claim, report.tau1);
  }
  g.accounting.bounds = {
      "L = L' + O(1)",
      "S = O(r log(1/eps)) + 3m + S'",
      "tau = max(O(log(Lambda' m d / eps)), tau')",
      "Lambda = O(Lambda'^2 poly(m) / eps)",
  };
  return g;
}

struct SampleOptions {
  bool exact = true;
  std::size_t threads = 1;
  ExactEvalConfig eval;
};

// Sample i uses the stream derive_seed(seed, i), so results do not depend on
// the thread count.
inline SampleSet sample_generator(const GeneratorSpec& g, std::size_t n, std::uint64_t seed, const SampleOptions& opt = {}) {
  detail::require(n >= 1, "sample count must be at least 1");
  SampleSet out(n, g.d);
  parallel_for(n, opt.threads, [&](std::size_t i) {
    Rng rng(seed, i);
    std::vector<double> x(g.m);
    draw_seed(g.seed_kind, rng, x);
    if (opt.exact) {
      const auto y = g.net.eval_exact(to_fixed(x), opt.eval);
      for (std::size_t j = 0; j < g.d; ++j) out.at(i, j) = y[j].to_double();
    } else {
      const auto y = g.net.eval_float(x);
      for (std::size_t j = 0; j < g.d; ++j) out.at(i, j) = y[j];
    }
  });
  out.provenance = {{"source", "generator"},
                    {"seed", std::to_string(seed)},
                    {"seed_kind", to_string(g.seed_kind)},
                    {"m", std::to_string(g.m)},
                    {"d", std::to_string(g.d)},
                    {"epsilon", format_double(g.epsilon)},
                    {"eval", opt.exact ? "exact" : "float"}};
  return out;
}

// Serialization: generator.json holds the recipe and points at stage files in
// the same directory. Loading rebuilds the network and checks it against them.
inline nlohmann::json target_to_json(const TargetModel& t) {
  nlohmann::json j = {{"kind", t.kind}, {"r", t.r}, {"d", t.d}, {"dims", t.dims}};
  if (t.kind == "leaky") {
    j["leak"] = t.leak;
    j["sigma_min"] = t.sigma_min;
  }
  if (t.rng_seed) j["rng_seed"] = *t.rng_seed;
  return j;
}

inline nlohmann::json prg_to_json(const LocalPrg& prg) {
  return {{"schema", "forge.prg"}, {"version", 1}, {"hypergraph", hypergraph_to_json(prg.graph())}, {"predicate", predicate_to_json(prg.predicate())}};
}

inline LocalPrg prg_from_json(const nlohmann::json& j) {
  detail::require(j.is_object() && j.value("schema", "") == "forge.prg", "not a forge.prg document");
  return LocalPrg(hypergraph_from_json(j.at("hypergraph")), predicate_from_json(j.at("predicate")));
}

inline nlohmann::json accounting_to_json(const GeneratorSpec& g) {
  return {{"L_formula", g.accounting.L_formula},
          {"S_formula", g.accounting.S_formula},
          {"tau_claim", g.accounting.tau_claim},
          {"L", g.net.profile().L},
          {"S", g.net.profile().S},
          {"tau", g.net.profile().tau},
          {"lambda", g.net.profile().lambda},
          {"bit_net_lambda", g.bit_net.profile().lambda},
          {"bounds", g.accounting.bounds}};
}

inline void write_generator(const GeneratorSpec& g, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json stages = nlohmann::json::array();
  if (g.frontend) {
    write_json_file((fs::path(dir) / "frontend.json").string(), relunet_to_json(*g.frontend));
    stages.push_back({{"role", "frontend"}, {"file", "frontend.json"}});
  }
  write_json_file((fs::path(dir) / "prg.json").string(), prg_to_json(g.prg));
  stages.push_back({{"role", "prg"}, {"file", "prg.json"}, {"projection", g.projection}});
  write_json_file((fs::path(dir) / "decoder.json").string(), relunet_to_json(g.decoder));
  stages.push_back({{"role", "decoder"}, {"file", "decoder.json"}});
  write_json_file((fs::path(dir) / "pushforward.json").string(), relunet_to_json(g.target.H));
  stages.push_back({{"role", "pushforward"}, {"file", "pushforward.json"}});
  nlohmann::json j = {{"schema", "forge.generator"},
                      {"version", 1},
                      {"m", g.m},
                      {"d", g.d},
                      {"epsilon", g.epsilon},
                      {"seed_kind", to_string(g.seed_kind)},
                      {"decoder_bits", g.decoder_n},
                      {"prg_bits_used", g.s},
                      {"stages", stages},
                      {"target", target_to_json(g.target)},
                      {"profile", profile_to_json(g.net.profile())},
                      {"accounting", accounting_to_json(g)}};
  if (g.frontend_q) {
    j["frontend"] = {{"xi_prime", g.xi_prime}, {"q", g.frontend_q->str()}};
  }
  write_json_file((fs::path(dir) / "generator.json").string(), j);
}

inline GeneratorSpec load_generator(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path file(path);
  if (fs::is_directory(file)) file /= "generator.json";
  const auto j = read_json_file(file.string());
  detail::require(j.is_object() && j.value("schema", "") == "forge.generator", "not a forge.generator document");
  detail::require(j.value("version", 0) == 1, "unsupported forge.generator version");
  const fs::path dir = file.parent_path();
  std::map<std::string, std::string> files;
  for (const auto& s : j.at("stages")) files[s.at("role").get<std::string>()] = s.at("file").get<std::string>();
  for (const char* role : {"prg", "decoder", "pushforward"}) {
    detail::require(files.count(role) == 1, std::string("generator is missing the ") + role + " stage");
  }
  const LocalPrg prg = prg_from_json(read_json_file((dir / files["prg"]).string()));
  const ReluNet H = relunet_from_json(read_json_file((dir / files["pushforward"]).string()));
  const auto& tj = j.at("target");
  const std::string kind = tj.at("kind").get<std::string>();
  TargetModel target;
  if (kind == "leaky") {
    target = sample_target(tj.at("dims").get<std::vector<std::size_t>>(), tj.at("leak").get<double>(), tj.at("rng_seed").get<std::uint64_t>());
    detail::require(relunet_to_json(target.H).at("layers") == relunet_to_json(H).at("layers"),
                    "pushforward stage does not match the recorded leaky target");
  } else if (kind == "identity") {
    target = identity_target(H.d_in());
  } else {
    target = net_target(H);
  }
  GeneratorSpec g = assemble(prg, target, seed_kind_from_string(j.at("seed_kind").get<std::string>()), j.at("epsilon").get<double>());
  const ReluNet decoder = relunet_from_json(read_json_file((dir / files["decoder"]).string()));
  detail::require(relunet_to_json(decoder).at("layers") == relunet_to_json(g.decoder).at("layers"), "decoder stage does not match the recipe");
  if (g.frontend) {
    detail::require(files.count("frontend") == 1, "continuous seeds need a frontend stage");
    const ReluNet fe = relunet_from_json(read_json_file((dir / files["frontend"]).string()));
    detail::require(relunet_to_json(fe).at("layers") == relunet_to_json(*g.frontend).at("layers"), "frontend stage does not match the recipe");
  }
  const auto& p = j.at("profile");
  detail::require(p.at("L").get<std::size_t>() == g.net.profile().L && p.at("S").get<std::size_t>() == g.net.profile().S &&
                      p.at("tau").get<unsigned>() == g.net.profile().tau,
                  "recorded profile does not match the rebuilt generator");
  return g;
}

}  // namespace forge
