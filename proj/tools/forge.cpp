// forge command-line front end. Exit codes: 0 ok, 1 user error, 2 internal error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "forge/forge.hpp"

namespace {

using forge::ValidationError;
using nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::size_t threads = 1;
  std::string format = "json";
};

// Summary on stdout: JSON document, or key,value rows for scalar fields.
void emit(const Globals& g, const json& summary) {
  if (g.format == "json") {
    std::cout << summary.dump(2) << '\n';
    return;
  }
  std::cout << "key,value\n";
  for (const auto& [k, v] : summary.items()) {
    if (v.is_structured()) continue;
    std::cout << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  }
}

void write_or_print(const Globals& g, const json& doc) {
  if (g.out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    forge::write_json_file(g.out, doc);
  }
}

void write_samples(const forge::SampleSet& s, const std::string& path) {
  forge::detail::require(!path.empty(), "--out is required for sample output");
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    forge::write_csv_file(s, path);
  } else {
    forge::write_binary(s, path);
  }
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("bad dims list '" + text + "': expected positive integers separated by commas");
    }
  }
  forge::detail::require(!out.empty(), "dims list is empty");
  return out;
}

forge::Predicate predicate_arg(const std::string& spec, std::size_t k, std::uint64_t seed) {
  forge::Rng rng(seed);
  return forge::resolve_predicate(spec, k, std::filesystem::current_path(), &rng);
}

json profile_summary(const forge::ReluNet& net) { return forge::profile_to_json(net.profile()); }

// Attack sides: prg:FILE, gen:DIR, uniform-bits, biased-bits:P.
struct Side {
  std::optional<forge::LocalPrg> prg;
  std::optional<forge::GeneratorSpec> gen;
  std::string spec;
};

Side load_side(const std::string& text) {
  Side s;
  if (text.rfind("prg:", 0) == 0) {
    s.prg = forge::prg_from_json(forge::read_json_file(text.substr(4)));
    s.spec = "prg";
  } else if (text.rfind("gen:", 0) == 0) {
    s.gen = forge::load_generator(text.substr(4));
    s.spec = "generator";
  } else {
    s.spec = text;
  }
  return s;
}

std::size_t side_dim(const Side& s) {
  if (s.prg) return s.prg->d();
  if (s.gen) return s.gen->d;
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"forge: hard generators, diversity certificates and distinguishers"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--format", g.format, "summary format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();

  // compile-predicate
  auto* cp = app.add_subcommand("compile-predicate", "compile a Boolean predicate to an exact ReLU net");
  std::string cp_pred = "tsa";
  std::size_t cp_k = 5;
  cp->add_option("--predicate", cp_pred, "tsa, parity, random or a predicate JSON file")->capture_default_str();
  cp->add_option("-k", cp_k, "arity for parity or random")->capture_default_str();

  // compile-circuit
  auto* cc = app.add_subcommand("compile-circuit", "compile an LTF circuit to a ReLU net");
  std::string cc_in;
  cc->add_option("--in", cc_in, "circuit JSON")->required();

  // prg
  auto* prg = app.add_subcommand("prg", "Goldreich local PRG");
  prg->require_subcommand(1);
  auto* ps = prg->add_subcommand("sample", "sample a hypergraph and write prg JSON");
  std::size_t ps_m = 0, ps_d = 0, ps_k = 5;
  std::string ps_pred = "tsa";
  ps->add_option("--m", ps_m, "seed length")->required();
  ps->add_option("--d", ps_d, "output length")->required();
  ps->add_option("-k", ps_k, "locality")->capture_default_str();
  ps->add_option("--predicate", ps_pred, "tsa, parity, random or a predicate JSON file")->capture_default_str();
  auto* pe = prg->add_subcommand("eval", "evaluate a PRG on random or given seeds");
  std::string pe_prg, pe_bits;
  std::size_t pe_n = 0;
  pe->add_option("--prg", pe_prg, "prg JSON")->required();
  pe->add_option("--n", pe_n, "number of random seeds");
  pe->add_option("--bits", pe_bits, "one seed as a string of + and -");

  // gen
  auto* gen = app.add_subcommand("gen", "assembled generators");
  gen->require_subcommand(1);
  auto* gb = gen->add_subcommand("build", "assemble a generator and write its stage files");
  std::string gb_prg, gb_target = "identity", gb_dims, gb_kind = "gaussian";
  double gb_leak = 0.25, gb_eps = 0.125;
  gb->add_option("--prg", gb_prg, "prg JSON")->required();
  gb->add_option("--target", gb_target, "identity or leaky")->check(CLI::IsMember({"identity", "leaky"}))->capture_default_str();
  gb->add_option("--dims", gb_dims, "target dims, e.g. 20,24,30");
  gb->add_option("--leak", gb_leak, "leaky slope")->capture_default_str();
  gb->add_option("--epsilon", gb_eps, "decoder accuracy")->capture_default_str();
  gb->add_option("--seed-kind", gb_kind, "bits, gaussian or unit-box")->capture_default_str();
  auto* gs = gen->add_subcommand("sample", "draw samples from a generator");
  std::string gs_gen;
  std::size_t gs_n = 1000;
  bool gs_float = false;
  gs->add_option("--gen", gs_gen, "generator directory or generator.json")->required();
  gs->add_option("--n", gs_n, "number of samples")->capture_default_str();
  gs->add_flag("--float", gs_float, "float64 evaluation instead of exact");

  // certify
  auto* ce = app.add_subcommand("certify", "diversity certificates");
  std::string ce_target = "cube-bits", ce_gen, ce_dims, ce_support_file, ce_target_file, ce_verify;
  std::size_t ce_d = 0;
  double ce_support = 0.0, ce_leak = 0.25;
  ce->add_option("--target", ce_target, "cube-bits, unit-box, leaky, generator or samples")
      ->check(CLI::IsMember({"cube-bits", "unit-box", "leaky", "generator", "samples"}))
      ->capture_default_str();
  ce->add_option("--d", ce_d, "target dimension");
  ce->add_option("--support", ce_support, "support size of the generator");
  ce->add_option("--dims", ce_dims, "leaky target dims");
  ce->add_option("--leak", ce_leak, "leaky slope")->capture_default_str();
  ce->add_option("--gen", ce_gen, "generator directory");
  ce->add_option("--support-samples", ce_support_file, "sample file listing the generator support");
  ce->add_option("--target-samples", ce_target_file, "sample file of target points");
  ce->add_option("--verify", ce_verify, "recheck an existing certificate file");

  // attack
  auto* at = app.add_subcommand("attack", "distinguishing attacks");
  std::string at_method = "mlp", at_source = "uniform-bits", at_target = "uniform-bits", at_stat = "sum", at_curve, at_x, at_y;
  std::size_t at_depth = 1, at_dim = 0, at_samples = 100000;
  forge::TrainConfig at_train;
  at->add_option("--method", at_method, "scan or mlp")->check(CLI::IsMember({"scan", "mlp"}))->capture_default_str();
  at->add_option("--depth", at_depth, "hidden layers of the MLP")->check(CLI::Range(1, 4))->capture_default_str();
  at->add_option("--source", at_source, "prg:FILE, gen:DIR, uniform-bits or biased-bits:P")->capture_default_str();
  at->add_option("--target", at_target, "same forms as --source")->capture_default_str();
  at->add_option("--dim", at_dim, "dimension when both sides are bit sources");
  at->add_option("--steps", at_train.steps, "training steps")->capture_default_str();
  at->add_option("--width", at_train.width, "hidden width")->capture_default_str();
  at->add_option("--batch", at_train.batch, "batch size per side")->capture_default_str();
  at->add_option("--lr", at_train.lr, "Adam step size")->capture_default_str();
  at->add_option("--eval-every", at_train.eval_every, "steps between test evaluations")->capture_default_str();
  at->add_option("--eval-samples", at_train.eval_samples, "held-out samples per side")->capture_default_str();
  at->add_option("--curve", at_curve, "loss-curve CSV path");
  at->add_option("--x", at_x, "scan: generator sample file");
  at->add_option("--y", at_y, "scan: target sample file");
  at->add_option("--statistic", at_stat, "scan: sum or coordinate:J")->capture_default_str();
  at->add_option("--samples", at_samples, "scan: samples per side drawn from the sources")->capture_default_str();

  // hardness
  auto* hd = app.add_subcommand("hardness", "range-membership hardness");
  hd->require_subcommand(1);
  auto* hc = hd->add_subcommand("check", "check the agreement bound on an enumerable instance");
  std::size_t hc_m = 4, hc_d = 8, hc_k = 3;
  std::string hc_pred = "random", hc_f = "constant";
  hc->add_option("--m", hc_m, "seed length")->required();
  hc->add_option("--d", hc_d, "output length")->required();
  hc->add_option("-k", hc_k, "locality")->capture_default_str();
  hc->add_option("--predicate", hc_pred, "random, tsa, parity or a predicate JSON file")->capture_default_str();
  hc->add_option("--classifier", hc_f, "constant, random-ltf, random-circuit or a circuit JSON file")->capture_default_str();

  // run
  auto* rn = app.add_subcommand("run", "run a config-driven experiment");
  std::string rn_config;
  bool rn_dry = false;
  rn->add_option("config", rn_config, "experiment config JSON")->required();
  rn->add_flag("--dry-run", rn_dry, "validate and print the plan without writing anything");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*cp) {
    forge::Rng rng(g.seed);
    const auto p = predicate_arg(cp_pred, cp_pred == "tsa" ? 5 : cp_k, g.seed);
    const auto net = forge::compile_predicate(p);
    std::size_t mismatches = 0;
    for (std::uint32_t idx = 0; idx < (1u << p.k()); ++idx) {
      const auto x = forge::index_point(idx, p.k());
      const auto y = net.eval_exact(forge::to_fixed(std::vector<double>(x.begin(), x.end())));
      mismatches += y[0] != forge::FixedScalar(p.at_index(idx));
    }
    if (!g.out.empty()) forge::write_json_file(g.out, forge::relunet_to_json(net));
    emit(g, {{"k", p.k()}, {"exact_mismatches", mismatches}, {"profile", profile_summary(net)}, {"out", g.out}});
    return mismatches == 0 ? 0 : 2;
  }
  if (*cc) {
    auto c = forge::circuit_from_json(forge::read_json_file(cc_in));
    if (!c.is_layered()) c = forge::layer_circuit(c);
    forge::LtfCompileReport report;
    const auto net = forge::ltf_to_relu(c, std::nullopt, &report);
    if (!g.out.empty()) forge::write_json_file(g.out, forge::relunet_to_json(net));
    emit(g, {{"n", c.n()}, {"gates", c.gates().size()}, {"depth", c.depth()}, {"profile", profile_summary(net)}, {"out", g.out}});
    return 0;
  }
  if (*ps) {
    const auto p = predicate_arg(ps_pred, ps_pred == "tsa" ? 5 : ps_k, g.seed);
    const forge::LocalPrg lp(forge::sample_hypergraph(ps_m, ps_d, p.k(), g.seed), p);
    write_or_print(g, forge::prg_to_json(lp));
    return 0;
  }
  if (*pe) {
    const auto lp = forge::prg_from_json(forge::read_json_file(pe_prg));
    if (!pe_bits.empty()) {
      std::vector<int> seed;
      for (char c : pe_bits) {
        forge::detail::require(c == '+' || c == '-', "--bits takes a string of + and -");
        seed.push_back(c == '+' ? 1 : -1);
      }
      std::string y;
      for (int v : lp.eval(seed)) y += v > 0 ? '+' : '-';
      emit(g, {{"seed", pe_bits}, {"output", y}});
      return 0;
    }
    forge::detail::require(pe_n > 0, "give --n or --bits");
    forge::Rng rng(g.seed);
    forge::SampleSet s(pe_n, lp.d());
    std::vector<int> seed(lp.m());
    for (std::size_t i = 0; i < pe_n; ++i) {
      for (auto& v : seed) v = rng.sign();
      const auto y = lp.eval(seed);
      for (std::size_t j = 0; j < lp.d(); ++j) s.at(i, j) = y[j];
    }
    s.provenance = {{"source", "prg"}, {"seed", std::to_string(g.seed)}, {"m", std::to_string(lp.m())}, {"d", std::to_string(lp.d())}};
    write_samples(s, g.out);
    emit(g, {{"n", pe_n}, {"d", lp.d()}, {"out", g.out}});
    return 0;
  }
  if (*gb) {
    forge::detail::require(!g.out.empty(), "--out DIR is required");
    const auto lp = forge::prg_from_json(forge::read_json_file(gb_prg));
    forge::TargetModel target;
    if (gb_target == "leaky") {
      target = forge::sample_target(parse_dims(gb_dims), gb_leak, g.seed);
    } else {
      const std::size_t r = gb_dims.empty() ? std::min<std::size_t>(lp.d() / forge::decoder_bits(gb_eps), lp.m()) : parse_dims(gb_dims)[0];
      target = forge::identity_target(r);
    }
    const auto spec = forge::assemble(lp, target, forge::seed_kind_from_string(gb_kind), gb_eps);
    std::filesystem::create_directories(g.out);
    forge::write_generator(spec, g.out);
    emit(g, {{"m", spec.m}, {"d", spec.d}, {"profile", profile_summary(spec.net)}, {"accounting", forge::accounting_to_json(spec)}, {"out", g.out}});
    return 0;
  }
  if (*gs) {
    const auto spec = forge::load_generator(gs_gen);
    forge::SampleOptions opt;
    opt.exact = !gs_float;
    opt.threads = g.threads;
    const auto s = forge::sample_generator(spec, gs_n, g.seed, opt);
    write_samples(s, g.out);
    emit(g, {{"n", s.n}, {"d", s.d}, {"out", g.out}});
    return 0;
  }
  if (*ce) {
    if (!ce_verify.empty()) {
      const auto cert = forge::certificate_from_json(forge::read_json_file(ce_verify));
      const bool ok = forge::verify_certificate(cert);
      emit(g, {{"verified", ok}, {"N", cert.N}, {"beta", cert.beta}});
      return ok ? 0 : 1;
    }
    forge::DiversityCertificate cert;
    if (ce_target == "leaky") {
      const auto t = forge::sample_target(parse_dims(ce_dims), ce_leak, g.seed);
      cert = forge::certify_target(t);
    } else if (ce_target == "generator") {
      forge::detail::require(!ce_gen.empty(), "--gen is required for --target generator");
      cert = forge::certify_target(forge::load_generator(ce_gen).target);
    } else if (ce_target == "samples") {
      forge::detail::require(!ce_support_file.empty() && !ce_target_file.empty(), "--support-samples and --target-samples are required");
      cert = forge::support_gap_lower_bound(forge::read_samples(ce_support_file), forge::read_samples(ce_target_file));
    } else {
      forge::detail::require(ce_d > 0 && ce_support > 0.0, "--d and --support are required");
      cert = forge::support_gap_lower_bound(static_cast<std::size_t>(std::min(ce_support, 0x1p62)),
                                            ce_target == "cube-bits" ? forge::AnalyticTarget::CubeBits : forge::AnalyticTarget::UnitBox, ce_d);
    }
    const auto j = forge::certificate_to_json(cert);
    if (!g.out.empty()) forge::write_json_file(g.out, j);
    emit(g, {{"N", cert.N}, {"beta", cert.beta}, {"steps", cert.trace.size()}, {"warnings", cert.warnings.size()}, {"out", g.out}});
    return 0;
  }
  if (*at) {
    forge::AttackReport report;
    if (at_method == "scan" && !at_x.empty()) {
      forge::detail::require(!at_y.empty(), "--y is required with --x");
      const auto xs = forge::read_samples(at_x);
      const auto ys = forge::read_samples(at_y);
      forge::detail::require(xs.d == ys.d, "sample dimensions differ");
      auto stat = [&](const forge::SampleSet& s) {
        std::vector<double> out(s.n);
        std::size_t coord = 0;
        if (at_stat != "sum") {
          forge::detail::require(at_stat.rfind("coordinate:", 0) == 0, "--statistic is sum or coordinate:J");
          coord = std::stoul(at_stat.substr(11));
          forge::detail::require(coord < s.d, "scan coordinate out of range");
        }
        for (std::size_t i = 0; i < s.n; ++i) {
          out[i] = at_stat == "sum" ? std::accumulate(s.row(i), s.row(i) + s.d, 0.0) : s.at(i, coord);
        }
        return out;
      };
      report = forge::threshold_scan(stat(xs), stat(ys));
    } else {
      const Side src = load_side(at_source);
      const Side tgt = load_side(at_target);
      std::size_t dim = std::max(side_dim(src), side_dim(tgt));
      if (dim == 0) dim = at_dim;
      forge::detail::require(dim > 0, "--dim is required when both sides are bit sources");
      const auto gen_s = forge::resolve_sampler(src.spec, dim, src.prg ? &*src.prg : nullptr, src.gen ? &*src.gen : nullptr);
      const auto tgt_s = forge::resolve_sampler(tgt.spec, dim, tgt.prg ? &*tgt.prg : nullptr, tgt.gen ? &*tgt.gen : nullptr);
      forge::detail::require(gen_s.dim == tgt_s.dim, "source and target dimensions differ");
      if (at_method == "mlp") {
        at_train.hidden_layers = at_depth;
        at_train.seed = g.seed;
        report = forge::train_discriminator(at_train, gen_s, tgt_s).report;
      } else {
        auto draw = [&](const forge::Sampler& s, std::uint64_t stream) {
          forge::Rng rng(g.seed, stream);
          std::vector<float> buf(dim);
          std::vector<double> out(at_samples);
          std::size_t coord = at_stat == "sum" ? 0 : std::stoul(at_stat.substr(11));
          forge::detail::require(coord < dim, "scan coordinate out of range");
          for (auto& v : out) {
            s.draw(rng, buf.data());
            v = at_stat == "sum" ? std::accumulate(buf.begin(), buf.end(), 0.0) : buf[coord];
          }
          return out;
        };
        report = forge::threshold_scan(draw(gen_s, 1), draw(tgt_s, 2));
      }
    }
    if (!g.out.empty()) forge::write_json_file(g.out, forge::report_to_json(report));
    if (!at_curve.empty()) {
      std::ofstream out(at_curve);
      forge::detail::require(static_cast<bool>(out), "cannot write " + at_curve);
      forge::write_loss_curve_csv(report.loss_curve, out);
    }
    json summary = {{"method", report.method}, {"advantage", report.advantage}, {"ci_low", report.ci_low},
                    {"ci_high", report.ci_high}, {"status", report.status}};
    if (report.details.contains("balanced_accuracy")) summary["balanced_accuracy"] = report.details["balanced_accuracy"];
    if (report.details.contains("final_test_loss")) summary["final_test_loss"] = report.details["final_test_loss"];
    if (report.threshold) summary["threshold"] = *report.threshold;
    emit(g, summary);
    return 0;
  }
  if (*hc) {
    forge::Rng rng(g.seed);
    const auto graph = forge::sample_hypergraph(hc_m, hc_d, hc_k, rng.next_u64());
    const forge::HardFunction h(forge::LocalPrg(graph, forge::resolve_predicate(hc_pred, hc_k, std::filesystem::current_path(), &rng)));
    forge::Classifier f;
    if (hc_f == "constant") {
      f = [](const std::vector<int>&) { return 1; };
    } else if (hc_f == "random-ltf") {
      f = forge::classifier_from_circuit(forge::random_layered_circuit(hc_d, {1}, rng));
    } else if (hc_f == "random-circuit") {
      f = forge::classifier_from_circuit(forge::random_layered_circuit(hc_d, {4, 2, 1}, rng));
    } else {
      const auto c = forge::circuit_from_json(forge::read_json_file(hc_f));
      forge::detail::require(c.n() == hc_d, "circuit input count must equal d");
      f = forge::classifier_from_circuit(c);
    }
    const auto r = forge::check_hardness_bound(f, h, g.threads);
    auto j = forge::hardness_to_json(r);
    j["hypergraph"] = forge::hypergraph_to_json(graph);
    if (!g.out.empty()) forge::write_json_file(g.out, j);
    emit(g, {{"m", r.m}, {"d", r.d}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"epsilon", r.epsilon}, {"holds", r.holds},
             {"injective", r.injective}, {"range_size", r.range_size}});
    return r.holds ? 0 : 2;
  }
  if (*rn) {
    const auto cfg = forge::load_experiment_config(rn_config);
    forge::RunOptions opt;
    if (!g.out.empty()) opt.output = g.out;
    if (app.get_option("--threads")->count()) opt.threads = g.threads;
    opt.dry_run = rn_dry;
    opt.log = &std::cerr;
    const auto result = forge::run_experiment(cfg, opt);
    if (rn_dry) {
      emit(g, result.plan);
      return 0;
    }
    emit(g, {{"status", result.manifest["status"]}, {"output", result.output_dir.string()},
             {"config_sha256", cfg.config_sha256}, {"outputs", result.manifest["outputs"]}});
    if (result.exit_code != 0) std::cerr << "error: " << result.manifest.value("error", "") << '\n';
    return result.exit_code;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const forge::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const forge::RefusedError& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return 1;
  } catch (const forge::ArithmeticOverflow& e) {
    std::cerr << "overflow: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}
