#pragma once

// JSON form of ReluNet:
//   {"schema": "forge.relunet", "version": 1,
//    "profile": {"L", "S", "lambda", "tau", "d_in", "d_out"},
//    "layers": [{"rows", "cols", "weights": [{"mantissa", "tau"}, ...] (row-major),
//                "bias": [{"mantissa", "tau"}, ...]}]}
// Layers with more than kDenseEntryLimit cells are written with
// "encoding": "triplets" and "entries": [[row, col, {"mantissa", "tau"}], ...].
// Mantissas outside the int64 range are written as decimal strings.

#include <fstream>
#include <limits>
#include <string>

#include <json.hpp>

#include "forge/error.hpp"
#include "forge/fixed_scalar.hpp"
#include "forge/relu_net.hpp"

namespace forge {

using Json = nlohmann::json;

inline constexpr int kReluNetSchemaVersion = 1;
inline constexpr std::size_t kDenseEntryLimit = std::size_t{1} << 20;

inline Json scalar_to_json(const FixedScalar& v) {
  Json out;
  const BigInt& m = v.mantissa();
  if (m >= std::numeric_limits<long long>::min() && m <= std::numeric_limits<long long>::max()) {
    out["mantissa"] = m.convert_to<long long>();
  } else {
    out["mantissa"] = m.str();
  }
  out["tau"] = v.tau();
  return out;
}

inline FixedScalar scalar_from_json(const Json& j) {
  if (j.is_number_integer()) return FixedScalar(j.get<long long>());
  detail::require(j.is_object() && j.contains("mantissa") && j.contains("tau"), "scalar must be {mantissa, tau}");
  const Json& m = j.at("mantissa");
  BigInt mantissa;
  if (m.is_string()) {
    const auto text = m.get<std::string>();
    detail::require(!text.empty() && text.find_first_not_of("-0123456789") == std::string::npos, "mantissa string must be an integer");
    mantissa = BigInt(text);
  } else {
    detail::require(m.is_number_integer(), "mantissa must be an integer");
    mantissa = BigInt(m.get<long long>());
  }
  const long long tau = j.at("tau").get<long long>();
  detail::require(tau >= 0, "tau must be non-negative");
  return FixedScalar::from_mantissa(std::move(mantissa), static_cast<unsigned>(tau));
}

inline Json profile_to_json(const ComplexityProfile& p) {
  return Json{{"L", p.L}, {"S", p.S}, {"lambda", p.lambda}, {"tau", p.tau}, {"d_in", p.d_in}, {"d_out", p.d_out}};
}

inline Json relunet_to_json(const ReluNet& net) {
  Json layers = Json::array();
  for (const auto& layer : net.layers()) {
    Json jl;
    jl["rows"] = layer.weight.rows();
    jl["cols"] = layer.weight.cols();
    if (layer.weight.rows() * layer.weight.cols() <= kDenseEntryLimit) {
      Json weights = Json::array();
      for (const auto& v : layer.weight.to_dense()) weights.push_back(scalar_to_json(v));
      jl["weights"] = std::move(weights);
    } else {
      jl["encoding"] = "triplets";
      Json entries = Json::array();
      for (const auto& t : layer.weight.triplets()) entries.push_back(Json::array({t.row, t.col, scalar_to_json(t.value)}));
      jl["entries"] = std::move(entries);
    }
    Json bias = Json::array();
    for (const auto& v : layer.bias) bias.push_back(scalar_to_json(v));
    jl["bias"] = std::move(bias);
    layers.push_back(std::move(jl));
  }
  return Json{{"schema", "forge.relunet"}, {"version", kReluNetSchemaVersion}, {"profile", profile_to_json(net.profile())},
              {"layers", std::move(layers)}};
}

inline ReluNet relunet_from_json(const Json& j) {
  detail::require(j.is_object() && j.value("schema", "") == "forge.relunet", "not a forge.relunet document");
  detail::require(j.value("version", 0) == kReluNetSchemaVersion, "unsupported relunet schema version");
  std::vector<Layer> layers;
  for (const auto& jl : j.at("layers")) {
    const auto rows = jl.at("rows").get<std::size_t>();
    const auto cols = jl.at("cols").get<std::size_t>();
    Layer layer;
    if (jl.value("encoding", "dense") == "triplets") {
      std::vector<Triplet> t;
      for (const auto& e : jl.at("entries")) t.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), scalar_from_json(e.at(2))});
      layer.weight = SparseMatrix::from_triplets(rows, cols, std::move(t));
    } else {
      const auto& w = jl.at("weights");
      detail::require(w.size() == rows * cols, "weight array length must be rows*cols");
      std::vector<FixedScalar> dense;
      dense.reserve(w.size());
      for (const auto& v : w) dense.push_back(scalar_from_json(v));
      layer.weight = SparseMatrix::from_dense(rows, cols, dense);
    }
    for (const auto& v : jl.at("bias")) layer.bias.push_back(scalar_from_json(v));
    layers.push_back(std::move(layer));
  }
  ReluNet::Claims claims;
  if (j.contains("profile")) {
    const auto& p = j.at("profile");
    if (p.contains("lambda")) claims.lambda = p.at("lambda").get<double>();
    if (p.contains("tau")) claims.tau = p.at("tau").get<unsigned>();
  }
  ReluNet net(std::move(layers), claims);
  if (j.contains("profile")) {
    const auto& p = j.at("profile");
    const auto& got = net.profile();
    detail::require(p.value("L", got.L) == got.L && p.value("S", got.S) == got.S && p.value("d_in", got.d_in) == got.d_in &&
                        p.value("d_out", got.d_out) == got.d_out,
                    "profile block disagrees with the layers");
  }
  return net;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j, int indent = 2) {
  std::ofstream out(path);
  detail::require(static_cast<bool>(out), "cannot write " + path);
  out << j.dump(indent) << '\n';
}

}  // namespace forge
