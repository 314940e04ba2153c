#pragma once

// Config-driven experiment runner. A config names the stages it wants by
// section (prg, generator, certify, attack, hardness); stages run in that
// fixed order and write their artifacts plus manifest.json into one directory.

#include <openssl/evp.h>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/distinguisher.hpp"
#include "forge/diversity.hpp"
#include "forge/error.hpp"
#include "forge/generator.hpp"
#include "forge/goldreich.hpp"
#include "forge/hardness.hpp"
#include "forge/mlp.hpp"
#include "forge/parallel.hpp"
#include "forge/relu_net_json.hpp"
#include "forge/sample_set.hpp"

namespace forge {

inline constexpr const char* forge_version = "1.0.0";

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json library_versions() {
  return {{"forge", forge_version},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                        std::to_string(BOOST_VERSION % 100)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

// Invalid config, reported as "file:line: path: message".
class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& what) : ValidationError(what) {}
};

namespace detail {

// Raw config text, used to point diagnostics at the line of a key.
struct ConfigSource {
  std::string name;
  std::string text;

  std::size_t line_of(const std::vector<std::string>& path) const {
    std::size_t pos = 0;
    for (const auto& key : path) {
      const auto hit = text.find("\"" + key + "\"", pos);
      if (hit == std::string::npos) break;
      pos = hit;
    }
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(pos, text.size())), '\n'));
  }
};

// Reads one JSON object, checking types and rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& obj, std::vector<std::string> path, const ConfigSource& src)
      : obj_(obj), path_(std::move(path)), src_(src) {
    if (!obj_.is_object()) fail({}, "expected an object");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    auto p = path_;
    if (!key.empty()) p.push_back(key);
    std::string dotted;
    for (const auto& k : p) dotted += (dotted.empty() ? "" : ".") + k;
    throw ConfigError(src_.name + ":" + std::to_string(src_.line_of(p)) + ": " + (dotted.empty() ? "config" : dotted) + ": " + message);
  }

  std::size_t size(const std::string& key, std::optional<std::size_t> fallback = std::nullopt) {
    const auto* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
    return v->get<std::size_t>();
  }

  std::uint64_t u64(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
    const auto* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const auto* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number()) fail(key, "expected a number");
    return v->get<double>();
  }

  bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt) {
    const auto* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_boolean()) fail(key, "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const auto* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  std::vector<std::size_t> sizes(const std::string& key, std::optional<std::vector<std::size_t>> fallback = std::nullopt) {
    const auto* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_array()) fail(key, "expected an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) fail(key, "expected an array of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  ObjectReader child(const std::string& key) {
    used_.insert(key);
    return ObjectReader(obj_.at(key), with(key), src_);
  }

  void skip(const std::string& key) { used_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) fail(key, "unknown key");
    }
  }

 private:
  const nlohmann::json* find(const std::string& key, bool optional) {
    used_.insert(key);
    if (!obj_.contains(key)) {
      if (!optional) fail(key, "required key is missing");
      return nullptr;
    }
    return &obj_.at(key);
  }

  std::vector<std::string> with(const std::string& key) const {
    auto p = path_;
    p.push_back(key);
    return p;
  }

  const nlohmann::json& obj_;
  std::vector<std::string> path_;
  const ConfigSource& src_;
  std::set<std::string> used_;
};

}  // namespace detail

struct PrgSection {
  std::size_t m = 0, d = 0, k = 5;
  std::string predicate = "tsa";  // tsa, parity or a predicate JSON file
  std::size_t samples = 0;
};

struct GeneratorSection {
  std::string target = "identity";  // identity or leaky
  std::vector<std::size_t> dims;
  double leak = 0.25;
  double epsilon = 0.125;
  std::string seed_kind = "gaussian";
  std::size_t samples = 0;
  bool exact = true;
};

struct CertifySection {
  std::string target = "cube-bits";  // cube-bits, unit-box or generator
  std::size_t d = 0;                 // defaults to the prg output dimension
  double support = 0.0;              // defaults to 2^m
};

struct AttackSection {
  std::string method = "mlp";  // mlp or scan
  std::vector<std::size_t> depths{1, 2, 3, 4};
  TrainConfig train;
  std::string source = "prg";          // prg, generator, uniform-bits, biased-bits:<p>
  std::string target = "uniform-bits"; // same grammar
  std::size_t dim = 0;                 // needed when neither side fixes the dimension
  std::size_t samples = 100000;        // scan only
  std::string statistic = "sum";       // scan only: sum or coordinate:<j>
};

struct HardnessSection {
  std::size_t m = 4, d = 8, k = 3;
  std::string predicate = "random";     // random, tsa or parity
  std::string classifier = "constant";  // constant, random-ltf or random-circuit
  std::size_t instances = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output = "out";
  std::size_t threads = 0;
  std::optional<PrgSection> prg;
  std::optional<GeneratorSection> generator;
  std::optional<CertifySection> certify;
  std::optional<AttackSection> attack;
  std::optional<HardnessSection> hardness;
  nlohmann::json raw;
  std::string source_name;
  std::string config_sha256;
  std::filesystem::path base_dir;  // relative paths inside the config resolve here
};

namespace detail {

inline void check_source_spec(ObjectReader& r, const std::string& key, const std::string& v) {
  if (v == "prg" || v == "generator" || v == "uniform-bits") return;
  if (v.rfind("biased-bits:", 0) == 0) {
    char* end = nullptr;
    const std::string num = v.substr(12);
    const double p = std::strtod(num.c_str(), &end);
    if (!num.empty() && *end == '\0' && p >= 0.0 && p <= 1.0) return;
  }
  r.fail(key, "expected prg, generator, uniform-bits or biased-bits:<p> with p in [0, 1]");
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text, const std::string& name = "config") {
  detail::ConfigSource src{name, text};
  ExperimentConfig cfg;
  try {
    cfg.raw = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line number
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(at > 0 ? at - 1 : 0), '\n');
    throw ConfigError(name + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  cfg.source_name = name;
  cfg.config_sha256 = sha256_hex(cfg.raw.dump());
  detail::ObjectReader top(cfg.raw, {}, src);
  if (top.has("schema") && top.string("schema") != "forge.experiment") top.fail("schema", "expected \"forge.experiment\"");
  if (top.has("version") && top.size("version") != 1) top.fail("version", "only version 1 is supported");
  cfg.name = top.string("name", cfg.name);
  cfg.seed = top.u64("seed");
  cfg.output = top.string("output", cfg.output);
  cfg.threads = top.size("threads", 0);

  if (top.has("prg")) {
    auto r = top.child("prg");
    PrgSection s;
    s.m = r.size("m");
    s.d = r.size("d");
    s.k = r.size("k", 5);
    s.predicate = r.string("predicate", "tsa");
    s.samples = r.size("samples", 0);
    if (s.m < 1 || s.d < 1) r.fail("m", "m and d must be positive");
    if (s.k < 1 || s.k > s.m) r.fail("k", "k must lie in 1..m");
    if (s.predicate == "tsa" && s.k != 5) r.fail("k", "the tsa predicate has arity 5");
    r.finish();
    cfg.prg = s;
  }
  if (top.has("generator")) {
    auto r = top.child("generator");
    GeneratorSection s;
    s.target = r.string("target", "identity");
    if (s.target != "identity" && s.target != "leaky") r.fail("target", "expected identity or leaky");
    s.dims = r.sizes("dims", std::vector<std::size_t>{});
    s.leak = r.number("leak", 0.25);
    s.epsilon = r.number("epsilon", 0.125);
    s.seed_kind = r.string("seed_kind", "gaussian");
    s.samples = r.size("samples", 0);
    s.exact = r.boolean("exact", true);
    if (!(s.epsilon > 0.0 && s.epsilon < 1.0)) r.fail("epsilon", "epsilon must lie in (0, 1)");
    if (s.seed_kind != "bits" && s.seed_kind != "gaussian" && s.seed_kind != "unit-box") {
      r.fail("seed_kind", "expected bits, gaussian or unit-box");
    }
    if (s.target == "leaky" && s.dims.size() < 2) r.fail("dims", "a leaky target needs at least two dims");
    if (s.target == "identity" && s.dims.size() > 1) r.fail("dims", "an identity target takes a single dim");
    r.finish();
    if (!cfg.prg) top.fail("generator", "the generator stage needs a prg section");
    cfg.generator = s;
  }
  if (top.has("certify")) {
    auto r = top.child("certify");
    CertifySection s;
    s.target = r.string("target", "cube-bits");
    if (s.target != "cube-bits" && s.target != "unit-box" && s.target != "generator") {
      r.fail("target", "expected cube-bits, unit-box or generator");
    }
    s.d = r.size("d", 0);
    s.support = r.number("support", 0.0);
    r.finish();
    if (s.target == "generator" && !cfg.generator) top.fail("certify", "certifying the generator target needs a generator section");
    if (s.target != "generator" && s.d == 0 && !cfg.prg) top.fail("certify", "set certify.d or add a prg section");
    if (s.target != "generator" && s.support <= 0.0 && !cfg.prg) top.fail("certify", "set certify.support or add a prg section");
    cfg.certify = s;
  }
  if (top.has("attack")) {
    auto r = top.child("attack");
    AttackSection s;
    s.method = r.string("method", "mlp");
    if (s.method != "mlp" && s.method != "scan") r.fail("method", "expected mlp or scan");
    s.depths = r.sizes("depths", s.depths);
    if (s.depths.empty()) r.fail("depths", "need at least one depth");
    for (auto k : s.depths) {
      if (k < 1 || k > 4) r.fail("depths", "depths must lie in 1..4");
    }
    auto& t = s.train;
    t.width = r.size("width", t.width);
    t.lr = r.number("lr", t.lr);
    t.beta1 = r.number("beta1", t.beta1);
    t.beta2 = r.number("beta2", t.beta2);
    t.adam_eps = r.number("adam_eps", t.adam_eps);
    t.batch = r.size("batch", t.batch);
    t.steps = r.size("steps", t.steps);
    t.eval_every = r.size("eval_every", t.eval_every);
    t.eval_samples = r.size("eval_samples", t.eval_samples);
    try {
      TrainConfig probe = t;
      probe.validate();
    } catch (const ValidationError& e) {
      r.fail("", e.what());
    }
    s.source = r.string("source", "prg");
    s.target = r.string("target", "uniform-bits");
    detail::check_source_spec(r, "source", s.source);
    detail::check_source_spec(r, "target", s.target);
    s.dim = r.size("dim", 0);
    s.samples = r.size("samples", s.samples);
    s.statistic = r.string("statistic", s.statistic);
    if (s.statistic != "sum" && s.statistic.rfind("coordinate:", 0) != 0) r.fail("statistic", "expected sum or coordinate:<j>");
    r.finish();
    for (const auto& side : {s.source, s.target}) {
      if (side == "prg" && !cfg.prg) top.fail("attack", "an attack on the prg needs a prg section");
      if (side == "generator" && !cfg.generator) top.fail("attack", "an attack on the generator needs a generator section");
    }
    const bool fixed = s.source == "prg" || s.source == "generator" || s.target == "prg" || s.target == "generator";
    if (!fixed && s.dim == 0) top.fail("attack", "attack.dim is required when both sides are bit sources");
    cfg.attack = s;
  }
  if (top.has("hardness")) {
    auto r = top.child("hardness");
    HardnessSection s;
    s.m = r.size("m", s.m);
    s.d = r.size("d", s.d);
    s.k = r.size("k", s.k);
    s.predicate = r.string("predicate", s.predicate);
    s.classifier = r.string("classifier", s.classifier);
    s.instances = r.size("instances", s.instances);
    if (s.m < 1 || s.m > HardFunction::max_m) r.fail("m", "m must lie in 1..20");
    if (s.d < 1 || s.d > exact_agreement_max_d) r.fail("d", "d must lie in 1..24");
    if (s.k < 1 || s.k > s.m) r.fail("k", "k must lie in 1..m");
    if (s.predicate != "random" && s.predicate != "tsa" && s.predicate != "parity") r.fail("predicate", "expected random, tsa or parity");
    if (s.predicate == "tsa" && s.k != 5) r.fail("k", "the tsa predicate has arity 5");
    if (s.classifier != "constant" && s.classifier != "random-ltf" && s.classifier != "random-circuit") {
      r.fail("classifier", "expected constant, random-ltf or random-circuit");
    }
    if (s.instances < 1) r.fail("instances", "need at least one instance");
    r.finish();
    cfg.hardness = s;
  }
  top.finish();
  if (!cfg.prg && !cfg.generator && !cfg.certify && !cfg.attack && !cfg.hardness) {
    top.fail("", "config declares no stages");
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  auto cfg = parse_experiment_config(read_text_file(path), path);
  cfg.base_dir = std::filesystem::path(path).parent_path();
  return cfg;
}

inline std::vector<std::string> experiment_stages(const ExperimentConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.prg) out.push_back("prg");
  if (cfg.generator) out.push_back("generator");
  if (cfg.certify) out.push_back("certify");
  if (cfg.attack) out.push_back("attack");
  if (cfg.hardness) out.push_back("hardness");
  return out;
}

// Fixed stream per stage so adding a stage never moves another stage's seed.
inline std::uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage) {
  static const std::map<std::string, std::uint64_t> streams{{"prg", 1}, {"generator", 2}, {"certify", 3}, {"attack", 4}, {"hardness", 5}};
  return derive_seed(cfg.seed, streams.at(stage));
}

inline Predicate resolve_predicate(const std::string& spec, std::size_t k, const std::filesystem::path& base, Rng* rng = nullptr) {
  if (spec == "tsa") return tsa_predicate();
  if (spec == "parity") return parity_predicate(static_cast<unsigned>(k));
  if (spec == "random") {
    detail::require(rng != nullptr, "a random predicate needs an rng");
    return random_predicate(static_cast<unsigned>(k), *rng);
  }
  const auto path = std::filesystem::path(spec).is_absolute() ? std::filesystem::path(spec) : base / spec;
  auto p = predicate_from_json(read_json_file(path.string()));
  detail::require(p.k() == k, "predicate file arity " + std::to_string(p.k()) + " does not match k = " + std::to_string(k));
  return p;
}

// Samplers named by the attack grammar; prg and generator must outlive them.
inline Sampler resolve_sampler(const std::string& spec, std::size_t dim, const LocalPrg* prg, const GeneratorSpec* gen) {
  if (spec == "prg") {
    detail::require(prg != nullptr, "no prg available for the attack");
    return prg_sampler(*prg);
  }
  if (spec == "generator") {
    detail::require(gen != nullptr, "no generator available for the attack");
    return generator_sampler(*gen);
  }
  if (spec == "uniform-bits") return biased_bits_sampler(dim);
  if (spec.rfind("biased-bits:", 0) == 0) return biased_bits_sampler(dim, std::stod(spec.substr(12)));
  throw ValidationError("unknown sampler " + spec);
}

struct RunOptions {
  std::optional<std::string> output;  // overrides cfg.output
  std::optional<std::size_t> threads;
  bool dry_run = false;
  std::ostream* log = nullptr;
};

struct RunResult {
  int exit_code = 0;
  nlohmann::json manifest;
  nlohmann::json plan;
  std::filesystem::path output_dir;
};

namespace detail {

struct RunContext {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  std::size_t threads;
  std::ostream* log;
  std::optional<LocalPrg> prg;
  std::optional<GeneratorSpec> gen;
  nlohmann::json outputs = nlohmann::json::array();

  void note(const std::string& msg) const {
    if (log) *log << msg << std::endl;
  }

  void record(const std::string& file) {
    const auto bytes = read_text_file((dir / file).string());
    outputs.push_back({{"file", file}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }

  void write_json(const std::string& file, const nlohmann::json& j) {
    write_json_file((dir / file).string(), j);
    record(file);
  }
};

inline void run_prg_stage(RunContext& ctx) {
  const auto& s = *ctx.cfg.prg;
  const auto seed = stage_seed(ctx.cfg, "prg");
  const auto graph = sample_hypergraph(s.m, s.d, s.k, seed);
  ctx.prg.emplace(graph, resolve_predicate(s.predicate, s.k, ctx.cfg.base_dir));
  ctx.write_json("prg.json", prg_to_json(*ctx.prg));
  if (s.samples > 0) {
    Rng rng(derive_seed(seed, 1));
    SampleSet out(s.samples, s.d);
    std::vector<int> x(s.m);
    for (std::size_t i = 0; i < s.samples; ++i) {
      for (auto& v : x) v = rng.sign();
      const auto y = ctx.prg->eval(x);
      for (std::size_t j = 0; j < s.d; ++j) out.at(i, j) = y[j];
    }
    out.provenance = {{"source", "prg"}, {"seed", std::to_string(derive_seed(seed, 1))}, {"m", std::to_string(s.m)},
                      {"d", std::to_string(s.d)}};
    write_csv_file(out, (ctx.dir / "prg_samples.csv").string());
    ctx.record("prg_samples.csv");
  }
  ctx.note("prg: m=" + std::to_string(s.m) + " d=" + std::to_string(s.d) + " k=" + std::to_string(s.k));
}

inline void run_generator_stage(RunContext& ctx) {
  const auto& s = *ctx.cfg.generator;
  const auto seed = stage_seed(ctx.cfg, "generator");
  TargetModel target;
  if (s.target == "leaky") {
    target = sample_target(s.dims, s.leak, derive_seed(seed, 0));
  } else {
    const std::size_t r = s.dims.empty() ? std::min<std::size_t>(ctx.prg->d() / decoder_bits(s.epsilon), ctx.prg->m()) : s.dims[0];
    detail::require(r >= 1, "the prg is too short for any decoder output at this epsilon");
    target = identity_target(r);
  }
  ctx.gen.emplace(assemble(*ctx.prg, target, seed_kind_from_string(s.seed_kind), s.epsilon));
  const auto gdir = ctx.dir / "generator";
  std::filesystem::create_directories(gdir);
  write_generator(*ctx.gen, gdir.string());
  for (const auto& e : std::filesystem::directory_iterator(gdir)) ctx.record("generator/" + e.path().filename().string());
  if (s.samples > 0) {
    SampleOptions opt;
    opt.exact = s.exact;
    opt.threads = ctx.threads;
    auto samples = sample_generator(*ctx.gen, s.samples, derive_seed(seed, 1), opt);
    write_csv_file(samples, (ctx.dir / "generator_samples.csv").string());
    ctx.record("generator_samples.csv");
  }
  ctx.note("generator: L=" + std::to_string(ctx.gen->net.profile().L) + " S=" + std::to_string(ctx.gen->net.profile().S));
}

inline void run_certify_stage(RunContext& ctx) {
  const auto& s = *ctx.cfg.certify;
  DiversityCertificate cert;
  if (s.target == "generator") {
    cert = certify_target(ctx.gen->target);
  } else {
    const std::size_t d = s.d > 0 ? s.d : ctx.cfg.prg->d;
    const double support = s.support > 0.0 ? s.support : std::ldexp(1.0, static_cast<int>(ctx.cfg.prg->m));
    cert = support_gap_lower_bound(static_cast<std::size_t>(std::min(support, 0x1p62)),
                                   s.target == "cube-bits" ? AnalyticTarget::CubeBits : AnalyticTarget::UnitBox, d);
  }
  ctx.write_json("certificate.json", certificate_to_json(cert));
  ctx.note("certify: beta=" + format_double(cert.beta));
}

inline void run_attack_stage(RunContext& ctx) {
  const auto& a = *ctx.cfg.attack;
  const auto seed = stage_seed(ctx.cfg, "attack");
  std::size_t dim = a.dim;
  if (a.source == "prg" || a.target == "prg") dim = ctx.prg->d();
  if (a.source == "generator" || a.target == "generator") dim = ctx.gen->d;
  const Sampler gen = resolve_sampler(a.source, dim, ctx.prg ? &*ctx.prg : nullptr, ctx.gen ? &*ctx.gen : nullptr);
  const Sampler target = resolve_sampler(a.target, dim, ctx.prg ? &*ctx.prg : nullptr, ctx.gen ? &*ctx.gen : nullptr);
  if (a.method == "scan") {
    std::size_t coord = 0;
    if (a.statistic != "sum") {
      coord = std::stoul(a.statistic.substr(11));
      detail::require(coord < dim, "scan coordinate out of range");
    }
    auto stat = [&](const Sampler& s, std::uint64_t stream) {
      Rng rng(seed, stream);
      std::vector<float> buf(dim);
      std::vector<double> out(a.samples);
      for (auto& v : out) {
        s.draw(rng, buf.data());
        v = a.statistic == "sum" ? std::accumulate(buf.begin(), buf.end(), 0.0) : buf[coord];
      }
      return out;
    };
    auto report = threshold_scan(stat(gen, 1), stat(target, 2));
    report.details["statistic"] = a.statistic;
    ctx.write_json("attack_scan.json", report_to_json(report));
    ctx.note("attack scan: advantage=" + format_double(report.advantage));
    return;
  }
  std::vector<AttackReport> reports(a.depths.size());
  parallel_for(a.depths.size(), std::min(ctx.threads, a.depths.size()), [&](std::size_t i) {
    TrainConfig t = a.train;
    t.hidden_layers = a.depths[i];
    t.seed = derive_seed(seed, a.depths[i]);
    reports[i] = train_discriminator(t, gen, target).report;
  });
  nlohmann::json summary = nlohmann::json::array();
  for (std::size_t i = 0; i < a.depths.size(); ++i) {
    const std::string tag = "depth" + std::to_string(a.depths[i]);
    {
      std::ofstream out(ctx.dir / ("loss_" + tag + ".csv"));
      detail::require(static_cast<bool>(out), "cannot write loss curve");
      write_loss_curve_csv(reports[i].loss_curve, out);
    }
    ctx.record("loss_" + tag + ".csv");
    ctx.write_json("attack_" + tag + ".json", report_to_json(reports[i]));
    summary.push_back({{"depth", a.depths[i]}, {"status", reports[i].status},
                       {"final_test_loss", reports[i].details.value("final_test_loss", 0.0)},
                       {"balanced_accuracy", reports[i].details.value("balanced_accuracy", 0.0)}});
    ctx.note("attack " + tag + ": accuracy=" + format_double(reports[i].details.value("balanced_accuracy", 0.0)) +
             " test_loss=" + format_double(reports[i].details.value("final_test_loss", 0.0)));
  }
  ctx.write_json("attack_summary.json", {{"schema", "forge.attack-summary"}, {"version", 1}, {"runs", summary}});
}

inline void run_hardness_stage(RunContext& ctx) {
  const auto& s = *ctx.cfg.hardness;
  Rng rng(stage_seed(ctx.cfg, "hardness"));
  nlohmann::json runs = nlohmann::json::array();
  bool all = true;
  for (std::size_t t = 0; t < s.instances; ++t) {
    const auto graph = sample_hypergraph(s.m, s.d, s.k, rng.next_u64());
    const HardFunction h(LocalPrg(graph, resolve_predicate(s.predicate, s.k, ctx.cfg.base_dir, &rng)));
    Classifier f;
    if (s.classifier == "constant") {
      f = [](const std::vector<int>&) { return 1; };
    } else if (s.classifier == "random-ltf") {
      const auto c = random_layered_circuit(s.d, {1}, rng);
      f = classifier_from_circuit(c);
    } else {
      f = classifier_from_circuit(random_layered_circuit(s.d, {4, 2, 1}, rng));
    }
    const auto r = check_hardness_bound(f, h, ctx.threads);
    all = all && r.holds;
    auto j = hardness_to_json(r);
    j["hypergraph"] = hypergraph_to_json(graph);
    runs.push_back(j);
  }
  ctx.write_json("hardness.json", {{"schema", "forge.hardness-run"}, {"version", 1}, {"classifier", s.classifier},
                                   {"all_hold", all}, {"instances", runs}});
  ctx.note(std::string("hardness: bound holds on all instances: ") + (all ? "yes" : "no"));
}

}  // namespace detail

inline nlohmann::json experiment_plan(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : experiment_stages(cfg)) {
    nlohmann::json outs = nlohmann::json::array();
    if (s == "prg") {
      outs.push_back("prg.json");
      if (cfg.prg->samples) outs.push_back("prg_samples.csv");
    } else if (s == "generator") {
      outs.push_back("generator/");
      if (cfg.generator->samples) outs.push_back("generator_samples.csv");
    } else if (s == "certify") {
      outs.push_back("certificate.json");
    } else if (s == "attack") {
      if (cfg.attack->method == "scan") {
        outs.push_back("attack_scan.json");
      } else {
        for (auto k : cfg.attack->depths) {
          outs.push_back("loss_depth" + std::to_string(k) + ".csv");
          outs.push_back("attack_depth" + std::to_string(k) + ".json");
        }
        outs.push_back("attack_summary.json");
      }
    } else if (s == "hardness") {
      outs.push_back("hardness.json");
    }
    stages.push_back({{"stage", s}, {"seed", stage_seed(cfg, s)}, {"outputs", outs}});
  }
  return {{"name", cfg.name}, {"output", dir.string()}, {"config_sha256", cfg.config_sha256}, {"stages", stages}};
}

inline RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  RunResult result;
  std::filesystem::path dir = opt.output ? std::filesystem::path(*opt.output) : std::filesystem::path(cfg.output);
  if (!opt.output && dir.is_relative()) dir = cfg.base_dir / dir;
  result.output_dir = dir;
  result.plan = experiment_plan(cfg, dir);
  if (opt.dry_run) return result;

  std::filesystem::create_directories(dir);
  detail::RunContext ctx{cfg, dir, resolve_threads(opt.threads.value_or(cfg.threads)), opt.log, {}, {}, nlohmann::json::array()};
  nlohmann::json& m = result.manifest;
  m = {{"schema", "forge.manifest"}, {"version", 1}, {"name", cfg.name}, {"config_sha256", cfg.config_sha256},
       {"config", cfg.raw}, {"seed", cfg.seed}, {"versions", library_versions()}};
  nlohmann::json seeds = nlohmann::json::object();
  for (const auto& s : experiment_stages(cfg)) seeds[s] = stage_seed(cfg, s);
  m["stage_seeds"] = seeds;
  nlohmann::json done = nlohmann::json::array();
  std::string current;
  try {
    for (const auto& s : experiment_stages(cfg)) {
      current = s;
      if (s == "prg") detail::run_prg_stage(ctx);
      if (s == "generator") detail::run_generator_stage(ctx);
      if (s == "certify") detail::run_certify_stage(ctx);
      if (s == "attack") detail::run_attack_stage(ctx);
      if (s == "hardness") detail::run_hardness_stage(ctx);
      done.push_back(s);
    }
    m["status"] = "ok";
  } catch (const std::exception& e) {
    m["status"] = "failed";
    m["failed_stage"] = current;
    m["error"] = e.what();
    const bool user = dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const RefusedError*>(&e);
    result.exit_code = user ? 1 : 2;
  }
  m["completed_stages"] = done;
  m["outputs"] = ctx.outputs;
  write_json_file((dir / "manifest.json").string(), m);
  return result;
}

}  // namespace forge
