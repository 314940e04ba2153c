#pragma once

// MLP discriminators trained with the DCGAN objective: ReLU hidden layers,
// sigmoid output, binary cross-entropy with target samples labelled 1 and
// generator samples labelled 0, one discriminator step per batch, no label
// smoothing, Adam.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "forge/distinguisher.hpp"
#include "forge/error.hpp"
#include "forge/generator.hpp"
#include "forge/goldreich.hpp"
#include "forge/rng.hpp"

namespace forge {

struct TrainConfig {
  std::size_t hidden_layers = 1;
  std::size_t width = 200;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 128;
  std::size_t steps = 20000;
  std::size_t eval_every = 1000;
  std::size_t eval_samples = 100000;  // per side
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(hidden_layers >= 1 && hidden_layers <= 4, "hidden_layers must lie in 1..4");
    detail::require(width >= 1, "width must be at least 1");
    detail::require(lr > 0.0 && std::isfinite(lr), "learning rate must be positive");
    detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
    detail::require(adam_eps > 0.0, "Adam eps must be positive");
    detail::require(batch >= 1, "batch must be at least 1");
    detail::require(steps >= 1, "steps must be at least 1");
    detail::require(eval_every >= 1, "eval_every must be at least 1");
    detail::require(eval_samples >= 1, "eval_samples must be at least 1");
  }

  nlohmann::json to_json() const {
    return {{"hidden_layers", hidden_layers}, {"width", width}, {"lr", lr}, {"beta1", beta1}, {"beta2", beta2},
            {"adam_eps", adam_eps}, {"batch", batch}, {"steps", steps}, {"eval_every", eval_every},
            {"eval_samples", eval_samples}, {"seed", seed}, {"init", "kaiming-uniform sqrt(6/fan_in), zero bias"},
            {"objective", "dcgan bce, 1 discriminator step per batch, no label smoothing"}};
  }
};

// Draws one sample of dimension `dim` into out[0..dim).
struct Sampler {
  std::size_t dim = 0;
  std::function<void(Rng&, float*)> draw;
  std::string name;
};

inline Sampler biased_bits_sampler(std::size_t d, double p_plus = 0.5) {
  return {d, [d, p_plus](Rng& rng, float* out) {
            if (p_plus == 0.5) {
              for (std::size_t i = 0; i < d; i += 64) {
                const std::uint64_t w = rng.next_u64();
                for (std::size_t j = i; j < std::min(d, i + 64); ++j) out[j] = (w >> (j - i)) & 1 ? -1.0f : 1.0f;
              }
            } else {
              for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<float>(rng.sign(p_plus));
            }
          },
          p_plus == 0.5 ? "uniform-bits" : "biased-bits"};
}

// PRG outputs in the +-1 codec for uniform +-1 seeds.
inline Sampler prg_sampler(const LocalPrg& prg) {
  const std::size_t m = prg.m();
  const std::size_t d = prg.d();
  return {d, [prg, m, d](Rng& rng, float* out) {
            if (m <= 64) {
              const std::uint64_t mask = m == 64 ? rng.next_u64() : rng.next_u64() & ((std::uint64_t{1} << m) - 1);
              const auto words = prg.eval_packed(mask);
              for (std::size_t l = 0; l < d; ++l) out[l] = (words[l / 64] >> (l % 64)) & 1 ? -1.0f : 1.0f;
            } else {
              std::vector<int> seed(m);
              for (auto& v : seed) v = rng.sign();
              const auto y = prg.eval(seed);
              for (std::size_t l = 0; l < d; ++l) out[l] = static_cast<float>(y[l]);
            }
          },
          "prg"};
}

inline Sampler generator_sampler(const GeneratorSpec& g) {
  return {g.d, [&g](Rng& rng, float* out) {
            std::vector<double> x(g.m);
            draw_seed(g.seed_kind, rng, x);
            const auto y = g.net.eval_float(x);
            for (std::size_t j = 0; j < g.d; ++j) out[j] = static_cast<float>(y[j]);
          },
          "generator"};
}

// Bias-corrected Adam on a flat parameter block.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Registers a block of n parameters and returns its handle.
  std::size_t add(std::size_t n) {
    m_.emplace_back(Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(n)));
    v_.emplace_back(Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(n)));
    return m_.size() - 1;
  }

  // Call once per optimisation step, before the block updates.
  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    c2_ = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  }

  void update(std::size_t handle, float* param, const float* grad) {
    auto& m = m_[handle];
    auto& v = v_[handle];
    Eigen::Map<Eigen::ArrayXf> p(param, m.size());
    Eigen::Map<const Eigen::ArrayXf> g(grad, m.size());
    const float b1 = static_cast<float>(beta1_);
    const float b2 = static_cast<float>(beta2_);
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.square();
    const float step = static_cast<float>(lr_ / c1_);
    const float root_c2 = static_cast<float>(std::sqrt(c2_));
    p -= step * m / (v.sqrt() / root_c2 + static_cast<float>(eps_));
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  double c1_ = 1.0, c2_ = 1.0;
  std::vector<Eigen::ArrayXf> m_, v_;
};

inline float softplus(float z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

class Mlp {
 public:
  Mlp(std::size_t d, std::size_t hidden_layers, std::size_t width, Rng& rng) {
    std::size_t fan_in = d;
    for (std::size_t l = 0; l <= hidden_layers; ++l) {
      const std::size_t out = l == hidden_layers ? 1 : width;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      Eigen::MatrixXf w(out, fan_in);
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<float>(rng.uniform(-bound, bound));
      }
      weights_.push_back(std::move(w));
      biases_.push_back(Eigen::VectorXf::Zero(static_cast<Eigen::Index>(out)));
      fan_in = out;
    }
  }

  std::size_t depth() const { return weights_.size(); }
  std::vector<Eigen::MatrixXf>& weights() { return weights_; }
  std::vector<Eigen::VectorXf>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXf>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXf>& biases() const { return biases_; }

  // Logits for the columns of x (d x B).
  Eigen::RowVectorXf logits(const Eigen::MatrixXf& x) const {
    Eigen::MatrixXf h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Eigen::MatrixXf z = weights_[l] * h;
      z.colwise() += biases_[l];
      h = l + 1 == weights_.size() ? z : z.cwiseMax(0.0f);
    }
    return h.row(0);
  }

  // Forward pass that caches activations for backward(); returns the logits.
  Eigen::RowVectorXf forward(const Eigen::MatrixXf& x) {
    const std::size_t L = weights_.size();
    acts_.resize(L + 1);
    acts_[0] = x;
    for (std::size_t l = 0; l < L; ++l) {
      Eigen::MatrixXf z = weights_[l] * acts_[l];
      z.colwise() += biases_[l];
      acts_[l + 1] = l + 1 == L ? z : z.cwiseMax(0.0f);
    }
    return acts_[L].row(0);
  }

  // Gradients of sum_i dlogit_i * logit_i at the last forward() input.
  void backward(const Eigen::RowVectorXf& dlogit, std::vector<Eigen::MatrixXf>& gw, std::vector<Eigen::VectorXf>& gb) const {
    const std::size_t L = weights_.size();
    gw.resize(L);
    gb.resize(L);
    Eigen::MatrixXf delta = dlogit;
    for (std::size_t l = L; l-- > 0;) {
      gw[l].noalias() = delta * acts_[l].transpose();
      gb[l] = delta.rowwise().sum();
      if (l > 0) {
        Eigen::MatrixXf back = weights_[l].transpose() * delta;
        delta = (acts_[l].array() > 0.0f).select(back, 0.0f);
      }
    }
  }

 private:
  std::vector<Eigen::MatrixXf> weights_;
  std::vector<Eigen::VectorXf> biases_;
  std::vector<Eigen::MatrixXf> acts_;
};

inline Eigen::MatrixXf draw_batch(const Sampler& s, Rng& rng, std::size_t n) {
  Eigen::MatrixXf x(static_cast<Eigen::Index>(s.dim), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) s.draw(rng, x.col(static_cast<Eigen::Index>(i)).data());
  return x;
}

struct EvalResult {
  double test_loss = 0.0;  // E[-log D(real)] + E[-log(1 - D(fake))] - 2 log 2
  double accuracy = 0.0;   // balanced, threshold 1/2
  double tpr = 0.0;        // real classified real
  double tnr = 0.0;        // fake classified fake
};

inline EvalResult evaluate_discriminator(const Mlp& net, const Eigen::MatrixXf& real, const Eigen::MatrixXf& fake) {
  constexpr Eigen::Index chunk = 4096;
  double loss_real = 0.0, loss_fake = 0.0;
  std::size_t hit_real = 0, hit_fake = 0;
  for (Eigen::Index c = 0; c < real.cols(); c += chunk) {
    const auto z = net.logits(real.middleCols(c, std::min(chunk, real.cols() - c)));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      loss_real += softplus(-z(i));
      hit_real += z(i) > 0.0f;
    }
  }
  for (Eigen::Index c = 0; c < fake.cols(); c += chunk) {
    const auto z = net.logits(fake.middleCols(c, std::min(chunk, fake.cols() - c)));
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      loss_fake += softplus(z(i));
      hit_fake += z(i) <= 0.0f;
    }
  }
  EvalResult r;
  const double nr = static_cast<double>(real.cols());
  const double nf = static_cast<double>(fake.cols());
  r.test_loss = loss_real / nr + loss_fake / nf - 2.0 * std::log(2.0);
  r.tpr = static_cast<double>(hit_real) / nr;
  r.tnr = static_cast<double>(hit_fake) / nf;
  r.accuracy = 0.5 * (r.tpr + r.tnr);
  return r;
}

struct TrainResult {
  Mlp net;
  AttackReport report;
};

// Independent streams under cfg.seed: 0 init, 1 and 2 training batches
// (generator, target), 3 and 4 held-out sets.
inline TrainResult train_discriminator(const TrainConfig& cfg, const Sampler& gen, const Sampler& target) {
  cfg.validate();
  detail::require(gen.dim == target.dim && gen.dim >= 1, "samplers must share a positive dimension");
  Rng init(cfg.seed, 0), gen_rng(cfg.seed, 1), target_rng(cfg.seed, 2), gen_test_rng(cfg.seed, 3), target_test_rng(cfg.seed, 4);
  Mlp net(gen.dim, cfg.hidden_layers, cfg.width, init);
  const Eigen::MatrixXf test_fake = draw_batch(gen, gen_test_rng, cfg.eval_samples);
  const Eigen::MatrixXf test_real = draw_batch(target, target_test_rng, cfg.eval_samples);

  Adam adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::vector<std::size_t> hw, hb;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    hw.push_back(adam.add(static_cast<std::size_t>(net.weights()[l].size())));
    hb.push_back(adam.add(static_cast<std::size_t>(net.biases()[l].size())));
  }
  AttackReport report;
  report.method = "mlp-depth-" + std::to_string(cfg.hidden_layers);
  report.n_gen = cfg.eval_samples;
  report.n_target = cfg.eval_samples;
  const auto B = static_cast<Eigen::Index>(cfg.batch);
  Eigen::MatrixXf x(static_cast<Eigen::Index>(gen.dim), 2 * B);
  Eigen::RowVectorXf dlogit(2 * B), z;
  std::vector<Eigen::MatrixXf> gw;
  std::vector<Eigen::VectorXf> gb;
  EvalResult last = evaluate_discriminator(net, test_real, test_fake);
  report.loss_curve.push_back({0, last.test_loss, last.accuracy});
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    // Columns [0, B) are target samples (label 1), [B, 2B) generator samples (label 0).
    for (Eigen::Index i = 0; i < B; ++i) target.draw(target_rng, x.col(i).data());
    for (Eigen::Index i = 0; i < B; ++i) gen.draw(gen_rng, x.col(B + i).data());
    z = net.forward(x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < 2 * B; ++i) {
      const float s = 1.0f / (1.0f + std::exp(-z(i)));
      const bool real = i < B;
      dlogit(i) = (real ? s - 1.0f : s) / static_cast<float>(B);
      loss += real ? softplus(-z(i)) : softplus(z(i));
    }
    if (!std::isfinite(loss)) {
      report.status = "diverged";
      report.details["diverged_at_step"] = step;
      break;
    }
    net.backward(dlogit, gw, gb);
    adam.begin_step();
    for (std::size_t l = 0; l < net.depth(); ++l) {
      adam.update(hw[l], net.weights()[l].data(), gw[l].data());
      adam.update(hb[l], net.biases()[l].data(), gb[l].data());
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      last = evaluate_discriminator(net, test_real, test_fake);
      if (!std::isfinite(last.test_loss)) {
        report.status = "diverged";
        report.details["diverged_at_step"] = step;
        break;
      }
      report.loss_curve.push_back({step, last.test_loss, last.accuracy});
    }
  }
  // Advantage of the thresholded discriminator: |Pr[D(real) > 1/2] - Pr[D(fake) > 1/2]|.
  report.advantage = std::abs(last.tpr - (1.0 - last.tnr));
  const double slack = 2.0 * std::sqrt(std::log(2.0 / 0.025) / (2.0 * static_cast<double>(cfg.eval_samples)));
  report.ci_low = std::max(0.0, report.advantage - slack);
  report.ci_high = std::min(1.0, report.advantage + slack);
  report.details["final_test_loss"] = last.test_loss;
  report.details["balanced_accuracy"] = last.accuracy;
  report.details["config"] = cfg.to_json();
  report.details["generator"] = gen.name;
  report.details["target"] = target.name;
  return {std::move(net), std::move(report)};
}

}  // namespace forge
