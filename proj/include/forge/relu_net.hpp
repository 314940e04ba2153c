#pragma once

// Layered ReLU networks x -> W_L phi(... phi(W_1 x + b_1) ...) + b_L with exact
// dyadic parameters and a complexity profile (depth, size, Lipschitz bound,
// bit complexity, dims).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "forge/error.hpp"
#include "forge/fixed_scalar.hpp"
#include "forge/linalg.hpp"
#include "forge/rng.hpp"

namespace forge {

struct ComplexityProfile {
  std::size_t L = 0;
  std::size_t S = 0;
  double lambda = 0.0;
  unsigned tau = 0;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
};

struct Layer {
  SparseMatrix weight;
  std::vector<FixedScalar> bias;
};

struct ExactEvalConfig {
  // Largest canonical mantissa (in bits) any intermediate activation may reach.
  std::size_t headroom_bits = 128;
};

using FixedVector = std::vector<FixedScalar>;

inline FixedVector to_fixed(const std::vector<double>& x) {
  FixedVector out;
  out.reserve(x.size());
  for (double v : x) out.push_back(FixedScalar::from_double(v));
  return out;
}

inline std::vector<double> to_double(const FixedVector& x) {
  std::vector<double> out;
  out.reserve(x.size());
  for (const auto& v : x) out.push_back(v.to_double());
  return out;
}

struct Interval {
  FixedScalar lo;
  FixedScalar hi;
};

class ReluNet {
 public:
  struct Claims {
    std::optional<double> lambda;
    std::optional<unsigned> tau;
  };

  ReluNet() = default;

  // Without a Lipschitz claim the bound is the product of layer operator norms.
  explicit ReluNet(std::vector<Layer> layers, Claims claims = {}) : layers_(std::move(layers)) {
    detail::require(!layers_.empty(), "a network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& layer = layers_[i];
      detail::require(layer.bias.size() == layer.weight.rows(), "bias length must equal weight rows in layer " + std::to_string(i));
      detail::require(layer.weight.all_finite_mirror(), "weights must be finite");
      if (i > 0) {
        detail::require(layer.weight.cols() == layers_[i - 1].weight.rows(),
                        "layer " + std::to_string(i) + " does not chain with the previous layer");
      }
    }
    profile_.L = layers_.size();
    profile_.d_in = layers_.front().weight.cols();
    profile_.d_out = layers_.back().weight.rows();
    profile_.S = 0;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) profile_.S += layers_[i].weight.rows();
    unsigned measured_tau = 0;
    for (const auto& layer : layers_) {
      measured_tau = std::max(measured_tau, layer.weight.bit_complexity());
      for (const auto& b : layer.bias) measured_tau = std::max(measured_tau, b.bit_complexity());
    }
    profile_.tau = std::max(measured_tau, claims.tau.value_or(0));
    if (claims.lambda) {
      detail::require(std::isfinite(*claims.lambda) && *claims.lambda >= 0.0, "Lipschitz claim must be finite and non-negative");
      profile_.lambda = *claims.lambda;
    } else {
      profile_.lambda = norm_product();
    }
    prepare_exact();
    for (const auto& layer : layers_) {
      std::vector<double> b;
      for (const auto& v : layer.bias) b.push_back(v.to_double());
      bias_double_.push_back(std::move(b));
    }
  }

  const ComplexityProfile& profile() const { return profile_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t d_in() const { return profile_.d_in; }
  std::size_t d_out() const { return profile_.d_out; }
  std::size_t depth() const { return profile_.L; }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> out{profile_.d_in};
    for (const auto& layer : layers_) out.push_back(layer.weight.rows());
    return out;
  }

  double norm_product() const {
    double product = 1.0;
    for (const auto& layer : layers_) product *= operator_norm_bound(layer.weight);
    return product;
  }

  std::vector<double> layer_norms() const {
    std::vector<double> out;
    for (const auto& layer : layers_) out.push_back(operator_norm_bound(layer.weight));
    return out;
  }

  FixedVector eval_exact(const FixedVector& x, const ExactEvalConfig& cfg = {}) const {
    detail::require(x.size() == profile_.d_in, "input dimension " + std::to_string(x.size()) + " does not match network input " +
                                                   std::to_string(profile_.d_in));
    // Activations share one exponent: value_i = num_i * 2^-exp.
    unsigned exp = 0;
    for (const auto& v : x) exp = std::max(exp, v.tau());
    std::vector<BigInt> num(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) num[i] = x[i].mantissa() << (exp - x[i].tau());

    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& ex = exact_[li];
      const auto& w = layers_[li].weight;
      const unsigned out_exp = exp + ex.weight_exp;
      const bool bias_shift_left = out_exp >= ex.bias_exp;
      const unsigned final_exp = std::max(out_exp, ex.bias_exp);
      std::vector<BigInt> next(w.rows());
      for (std::size_t r = 0; r < w.rows(); ++r) {
        BigInt acc = 0;
        for (std::size_t p = w.row_ptr()[r]; p < w.row_ptr()[r + 1]; ++p) {
          const auto& xv = num[w.col_idx()[p]];
          if (!xv.is_zero()) acc += ex.weight_num[p] * xv;
        }
        if (bias_shift_left) {
          if (!ex.bias_num[r].is_zero()) acc += ex.bias_num[r] << (out_exp - ex.bias_exp);
        } else {
          acc <<= (ex.bias_exp - out_exp);
          acc += ex.bias_num[r];
        }
        if (li + 1 < layers_.size() && acc.sign() < 0) acc = 0;
        next[r] = std::move(acc);
      }
      num = std::move(next);
      exp = final_exp;
      exp = normalize(num, exp, cfg.headroom_bits);
    }
    FixedVector out;
    out.reserve(num.size());
    for (auto& v : num) out.push_back(FixedScalar::from_mantissa(std::move(v), exp));
    return out;
  }

  std::vector<double> eval_float(const std::vector<double>& x) const {
    detail::require(x.size() == profile_.d_in, "input dimension " + std::to_string(x.size()) + " does not match network input " +
                                                   std::to_string(profile_.d_in));
    std::vector<double> cur = x;
    std::vector<double> next;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& w = layers_[li].weight;
      const auto& vals = w.values_double();
      next.assign(w.rows(), 0.0);
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t p = w.row_ptr()[r]; p < w.row_ptr()[r + 1]; ++p) acc += vals[p] * cur[w.col_idx()[p]];
        acc += bias_double_[li][r];
        if (li + 1 < layers_.size() && acc < 0.0) acc = 0.0;
        next[r] = acc;
      }
      std::swap(cur, next);
    }
    return cur;
  }

  // Interval bound propagation over an input box, exact.
  std::vector<Interval> output_bounds(const std::vector<Interval>& box) const {
    detail::require(box.size() == profile_.d_in, "box dimension mismatch");
    std::vector<Interval> cur = box;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& w = layers_[li].weight;
      std::vector<Interval> next(w.rows());
      for (std::size_t r = 0; r < w.rows(); ++r) {
        FixedScalar lo = layers_[li].bias[r];
        FixedScalar hi = layers_[li].bias[r];
        for (std::size_t p = w.row_ptr()[r]; p < w.row_ptr()[r + 1]; ++p) {
          const auto& c = w.values()[p];
          const auto& in = cur[w.col_idx()[p]];
          if (c.sign() > 0) {
            lo += c * in.lo;
            hi += c * in.hi;
          } else {
            lo += c * in.hi;
            hi += c * in.lo;
          }
        }
        if (li + 1 < layers_.size()) {
          lo = relu(lo);
          hi = relu(hi);
        }
        next[r] = {lo, hi};
      }
      cur = std::move(next);
    }
    return cur;
  }

  std::string describe() const {
    std::ostringstream os;
    os << "ReluNet(d_in=" << profile_.d_in << ", d_out=" << profile_.d_out << ", L=" << profile_.L << ", S=" << profile_.S
       << ", lambda=" << profile_.lambda << ", tau=" << profile_.tau << ")";
    return os.str();
  }

 private:
  struct ExactLayer {
    std::vector<BigInt> weight_num;
    unsigned weight_exp = 0;
    std::vector<BigInt> bias_num;
    unsigned bias_exp = 0;
  };

  void prepare_exact() {
    exact_.clear();
    for (const auto& layer : layers_) {
      ExactLayer ex;
      for (const auto& v : layer.weight.values()) ex.weight_exp = std::max(ex.weight_exp, v.tau());
      for (const auto& v : layer.bias) ex.bias_exp = std::max(ex.bias_exp, v.tau());
      for (const auto& v : layer.weight.values()) ex.weight_num.push_back(v.mantissa() << (ex.weight_exp - v.tau()));
      for (const auto& v : layer.bias) ex.bias_num.push_back(v.mantissa() << (ex.bias_exp - v.tau()));
      exact_.push_back(std::move(ex));
    }
  }

  // Drops common trailing zeros from the shared exponent and enforces headroom.
  static unsigned normalize(std::vector<BigInt>& num, unsigned exp, std::size_t headroom_bits) {
    unsigned common = exp;
    for (const auto& v : num) {
      if (v.is_zero()) continue;
      const auto magnitude = boost::multiprecision::abs(v);
      const unsigned low = static_cast<unsigned>(boost::multiprecision::lsb(magnitude));
      const std::size_t high = boost::multiprecision::msb(magnitude);
      const std::size_t canonical_bits = high + 1 - std::min(low, exp);
      if (canonical_bits > headroom_bits) {
        throw ArithmeticOverflow("activation needs " + std::to_string(canonical_bits) + " mantissa bits; headroom is " +
                                 std::to_string(headroom_bits));
      }
      common = std::min(common, low);
    }
    if (common > 0) {
      for (auto& v : num) v >>= common;
    }
    return exp - common;
  }

  std::vector<Layer> layers_;
  ComplexityProfile profile_;
  std::vector<ExactLayer> exact_;
  std::vector<std::vector<double>> bias_double_;
};

inline std::vector<Interval> unit_box(std::size_t d) {
  return std::vector<Interval>(d, Interval{FixedScalar(-1), FixedScalar(1)});
}

// Largest observed ||f(x) - f(y)|| / ||x - y|| over random pairs in [-1, 1]^d.
// Pairs are mixed across scales: independent points and small perturbations.
inline double empirical_lipschitz(const ReluNet& net, std::size_t trials, Rng& rng) {
  detail::require(trials >= 1, "trials must be at least 1");
  const std::size_t d = net.d_in();
  const double scales[] = {1.0, 1e-1, 1e-2, 1e-3};
  double best = 0.0;
  std::vector<double> x(d);
  std::vector<double> y(d);
  for (std::size_t t = 0; t < trials; ++t) {
    const double scale = scales[t % 4];
    for (std::size_t i = 0; i < d; ++i) x[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < d; ++i) y[i] = scale == 1.0 ? rng.uniform(-1.0, 1.0) : x[i] + scale * rng.uniform(-1.0, 1.0);
    double dx = 0.0;
    for (std::size_t i = 0; i < d; ++i) dx += (x[i] - y[i]) * (x[i] - y[i]);
    if (dx == 0.0) continue;
    const auto fx = net.eval_float(x);
    const auto fy = net.eval_float(y);
    double df = 0.0;
    for (std::size_t i = 0; i < fx.size(); ++i) df += (fx[i] - fy[i]) * (fx[i] - fy[i]);
    best = std::max(best, std::sqrt(df / dx));
  }
  return best;
}

// Lipschitz ratio maximized over explicit pairs of points (used for exhaustive cube checks).
inline double pairwise_lipschitz(const ReluNet& net, const std::vector<std::vector<double>>& points) {
  std::vector<std::vector<double>> values;
  for (const auto& p : points) values.push_back(net.eval_float(p));
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      double dx = 0.0;
      double df = 0.0;
      for (std::size_t c = 0; c < points[i].size(); ++c) dx += (points[i][c] - points[j][c]) * (points[i][c] - points[j][c]);
      for (std::size_t c = 0; c < values[i].size(); ++c) df += (values[i][c] - values[j][c]) * (values[i][c] - values[j][c]);
      if (dx > 0.0) best = std::max(best, std::sqrt(df / dx));
    }
  }
  return best;
}

// Convenience builders.
inline Layer make_layer(std::size_t rows, std::size_t cols, const std::vector<FixedScalar>& dense_weights, FixedVector bias) {
  return Layer{SparseMatrix::from_dense(rows, cols, dense_weights), std::move(bias)};
}

inline ReluNet identity_net(std::size_t d) {
  return ReluNet({Layer{SparseMatrix::identity(d), FixedVector(d)}}, {.lambda = 1.0, .tau = std::nullopt});
}

// Net computing the single coordinate x_i of R^d.
inline ReluNet coordinate_net(std::size_t d, std::size_t i) {
  detail::require(i < d, "coordinate out of range");
  return ReluNet({Layer{SparseMatrix::from_triplets(1, d, {{0, i, FixedScalar(1)}}), FixedVector(1)}}, {.lambda = 1.0, .tau = std::nullopt});
}

// The i-th output coordinate of `net` as its own network.
inline ReluNet output_coordinate(const ReluNet& net, std::size_t i) {
  detail::require(i < net.d_out(), "output coordinate out of range");
  auto layers = net.layers();
  auto& last = layers.back();
  std::vector<Triplet> t;
  for (auto& e : last.weight.triplets()) {
    if (e.row == i) t.push_back({0, e.col, e.value});
  }
  last.weight = SparseMatrix::from_triplets(1, last.weight.cols(), std::move(t));
  last.bias = {last.bias[i]};
  return ReluNet(std::move(layers), {.lambda = net.profile().lambda, .tau = net.profile().tau});
}

}  // namespace forge
