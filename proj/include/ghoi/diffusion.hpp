#pragma once

#include "ghoi/autodiff.hpp"
#include "ghoi/io.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ghoi {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

// ---------------------------------------------------------------- schedule

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  // Rescale betas by 1000/steps so short chains still end near pure noise.
  bool rescale = true;
};

/// Linear-beta DDPM schedule. Index t runs 1..T; alpha_bar[0] = 1.
struct NoiseSchedule {
  ScheduleConfig config;
  std::vector<double> beta, alpha, alpha_bar, coef_x0, coef_xt, sigma;

  int steps() const { return config.steps; }

  static NoiseSchedule make(const ScheduleConfig& cfg) {
    if (cfg.steps < 1) throw Error("schedule needs at least one step");
    if (!(cfg.beta_start > 0.0 && cfg.beta_start <= cfg.beta_end)) throw Error("invalid beta range");
    NoiseSchedule s;
    s.config = cfg;
    const int T = cfg.steps;
    const double k = cfg.rescale ? 1000.0 / T : 1.0;
    s.beta.assign(static_cast<std::size_t>(T + 1), 0.0);
    s.alpha.assign(static_cast<std::size_t>(T + 1), 1.0);
    s.alpha_bar.assign(static_cast<std::size_t>(T + 1), 1.0);
    s.coef_x0.assign(static_cast<std::size_t>(T + 1), 0.0);
    s.coef_xt.assign(static_cast<std::size_t>(T + 1), 0.0);
    s.sigma.assign(static_cast<std::size_t>(T + 1), 0.0);
    for (int t = 1; t <= T; ++t) {
      const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
      const double b = std::min(0.999, k * (cfg.beta_start + frac * (cfg.beta_end - cfg.beta_start)));
      const auto u = static_cast<std::size_t>(t);
      s.beta[u] = b;
      s.alpha[u] = 1.0 - b;
      s.alpha_bar[u] = s.alpha_bar[u - 1] * s.alpha[u];
    }
    for (int t = 1; t <= T; ++t) {
      const auto u = static_cast<std::size_t>(t);
      if (t == 1) {
        s.coef_x0[u] = 1.0;
        s.coef_xt[u] = 0.0;
        s.sigma[u] = 0.0;
        continue;
      }
      const double ab = s.alpha_bar[u], ab_prev = s.alpha_bar[u - 1];
      s.coef_x0[u] = s.beta[u] * std::sqrt(ab_prev) / (1.0 - ab);
      s.coef_xt[u] = (1.0 - ab_prev) * std::sqrt(s.alpha[u]) / (1.0 - ab);
      s.sigma[u] = std::sqrt(s.beta[u] * (1.0 - ab_prev) / (1.0 - ab));
    }
    return s;
  }

  void check_step(int t) const {
    if (t < 1 || t > config.steps) throw Error("diffusion step out of range: " + std::to_string(t));
  }

  /// Mean of q(x_{t-1} | x_t, x_0).
  MatrixXd posterior_mean(const MatrixXd& x0, const MatrixXd& xt, int t) const {
    check_step(t);
    const auto u = static_cast<std::size_t>(t);
    return coef_x0[u] * x0 + coef_xt[u] * xt;
  }
};

inline MatrixXd forward_diffuse(const MatrixXd& x0, int t, const MatrixXd& eps, const NoiseSchedule& s) {
  s.check_step(t);
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols()) throw Error("noise shape mismatch");
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

inline MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = g(rng);
  return m;
}

inline double loss_simple(const MatrixXd& x0, const MatrixXd& x0_hat) {
  if (x0.rows() != x0_hat.rows() || x0.cols() != x0_hat.cols()) throw Error("loss_simple shape mismatch");
  return (x0 - x0_hat).squaredNorm() / static_cast<double>(x0.size());
}

// ----------------------------------------------------------- normalization

/// Per-channel standardization. Constant channels keep unit scale.
struct Normalizer {
  RowVectorXd mean;
  RowVectorXd std;

  static Normalizer fit(const std::vector<MatrixXd>& sequences) {
    if (sequences.empty()) throw Error("cannot fit normalizer on no data");
    const Eigen::Index d = sequences.front().cols();
    RowVectorXd sum = RowVectorXd::Zero(d), sq = RowVectorXd::Zero(d);
    double n = 0.0;
    for (const auto& s : sequences) {
      if (s.cols() != d) throw Error("normalizer width mismatch");
      sum += s.colwise().sum();
      n += static_cast<double>(s.rows());
    }
    Normalizer z;
    z.mean = sum / n;
    for (const auto& s : sequences) sq += (s.rowwise() - z.mean).array().square().matrix().colwise().sum();
    z.std = (sq / n).cwiseSqrt();
    for (Eigen::Index c = 0; c < d; ++c)
      if (z.std[c] < 1e-8) z.std[c] = 1.0;
    return z;
  }

  static Normalizer identity(Eigen::Index d) { return {RowVectorXd::Zero(d), RowVectorXd::Ones(d)}; }

  Eigen::Index dim() const { return mean.size(); }

  MatrixXd normalize(const MatrixXd& x) const {
    return ((x.rowwise() - mean).array().rowwise() / std.array()).matrix();
  }
  MatrixXd denormalize(const MatrixXd& z) const {
    return ((z.array().rowwise() * std.array()).matrix()).rowwise() + mean;
  }
  /// Chain a physical-space gradient into normalized space.
  MatrixXd grad_to_normalized(const MatrixXd& g) const { return (g.array().rowwise() * std.array()).matrix(); }
};

/// Skip weights for an x0 head on unit-variance data: x_hat_0 = sqrt(ab) x_t + sqrt(1 - ab) F.
inline std::pair<std::vector<double>, std::vector<double>> skip_coefficients(const NoiseSchedule& s) {
  std::vector<double> a, b;
  for (double ab : s.alpha_bar) {
    a.push_back(std::sqrt(ab));
    b.push_back(std::sqrt(1.0 - ab));
  }
  return {a, b};
}

// ---------------------------------------------------------------- denoiser

struct DenoiserConfig {
  int x_dim = 9;
  int cond_dim = 0;
  int width = 64;
  int time_dim = 32;
  int blocks = 2;
  int ff_mult = 2;

  void validate() const {
    if (x_dim < 1 || cond_dim < 0 || width < 2 || time_dim < 2 || time_dim % 2 || blocks < 0 || ff_mult < 1)
      throw Error("invalid denoiser configuration");
  }
};

inline MatrixXd sinusoidal_rows(Eigen::Index rows, int dim, double offset = 0.0) {
  MatrixXd e(rows, dim);
  const int half = dim / 2;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int k = 0; k < half; ++k) {
      const double w = std::pow(10000.0, -static_cast<double>(k) / half);
      e(r, 2 * k) = std::sin((static_cast<double>(r) + offset) * w);
      e(r, 2 * k + 1) = std::cos((static_cast<double>(r) + offset) * w);
    }
  return e;
}

inline RowVectorXd time_embedding(int t, int dim) { return sinusoidal_rows(1, dim, static_cast<double>(t)).row(0); }

/// Pre-norm sequence transformer: per-frame linear embedding of
/// [x_t | cond | time], positional encoding, `blocks` single-head attention +
/// feed-forward blocks, final norm and linear head to x_dim.
///
/// Flat parameter order: w_in, b_in, then per block
/// ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2, then
/// lnf_g, lnf_b, w_out, b_out. Each matrix is flattened column-major.
class Denoiser {
 public:
  Denoiser() = default;

  explicit Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int W = cfg.width, F = cfg.width * cfg.ff_mult;
    add(cfg.x_dim + cfg.cond_dim + cfg.time_dim, W);
    add(1, W);
    for (int b = 0; b < cfg.blocks; ++b) {
      add(1, W), add(1, W);
      add(W, W), add(W, W), add(W, W), add(W, W);
      add(1, W), add(1, W);
      add(W, F), add(1, F), add(F, W), add(1, W);
    }
    add(1, W), add(1, W);
    add(W, cfg.x_dim), add(1, cfg.x_dim);
  }

  static Denoiser init(const DenoiserConfig& cfg, std::mt19937_64& rng) {
    Denoiser d(cfg);
    for (std::size_t i = 0; i < d.params_.size(); ++i) {
      auto& p = d.params_[i];
      if (p.rows() == 1) {
        if (d.is_gain(i)) p.setOnes();
        continue;
      }
      std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(p.rows())));
      for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = g(rng);
    }
    return d;
  }

  const DenoiserConfig& config() const { return cfg_; }
  std::vector<MatrixXd>& params() { return params_; }
  const std::vector<MatrixXd>& params() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
  }

  std::vector<ad::Var> bind(ad::Tape& t, bool trainable) const {
    std::vector<ad::Var> v;
    v.reserve(params_.size());
    for (const auto& p : params_) v.push_back(trainable ? t.variable(p) : t.constant(p));
    return v;
  }

  /// x: l x x_dim (normalized noisy state), cond: l x cond_dim.
  ad::Var forward(ad::Tape& t, const std::vector<ad::Var>& p, ad::Var x, ad::Var cond, int step) const {
    const Eigen::Index l = t.value(x).rows();
    if (t.value(x).cols() != cfg_.x_dim) throw Error("denoiser input width mismatch");
    if (t.value(cond).rows() != l || t.value(cond).cols() != cfg_.cond_dim) throw Error("denoiser condition shape mismatch");
    const MatrixXd temb = time_embedding(step, cfg_.time_dim).replicate(l, 1);
    std::vector<ad::Var> parts{x};
    if (cfg_.cond_dim > 0) parts.push_back(cond);
    parts.push_back(t.constant(temb));
    std::size_t k = 0;
    ad::Var h = t.add_row(t.matmul(t.concat_cols(parts), p[k]), p[k + 1]);
    k += 2;
    h = t.add(h, t.constant(sinusoidal_rows(l, cfg_.width)));
    const double inv = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
    for (int b = 0; b < cfg_.blocks; ++b) {
      const ad::Var n1 = t.layer_norm_rows(h, p[k], p[k + 1]);
      const ad::Var q = t.matmul(n1, p[k + 2]);
      const ad::Var kk = t.matmul(n1, p[k + 3]);
      const ad::Var v = t.matmul(n1, p[k + 4]);
      const ad::Var att = t.softmax_rows(t.scale(t.matmul_nt(q, kk), inv));
      h = t.add(h, t.matmul(t.matmul(att, v), p[k + 5]));
      const ad::Var n2 = t.layer_norm_rows(h, p[k + 6], p[k + 7]);
      const ad::Var ff = t.gelu(t.add_row(t.matmul(n2, p[k + 8]), p[k + 9]));
      h = t.add(h, t.add_row(t.matmul(ff, p[k + 10]), p[k + 11]));
      k += 12;
    }
    const ad::Var nf = t.layer_norm_rows(h, p[k], p[k + 1]);
    const ad::Var head = t.add_row(t.matmul(nf, p[k + 2]), p[k + 3]);
    if (c_skip_.empty()) return head;
    if (step < 0 || static_cast<std::size_t>(step) >= c_skip_.size()) throw Error("denoiser skip step out of range");
    const auto u = static_cast<std::size_t>(step);
    return t.add(t.scale(x, c_skip_[u]), t.scale(head, c_out_[u]));
  }

  /// Output becomes c_skip[t] * x_t + c_out[t] * head (per-step constants, not trained).
  void set_skip(std::vector<double> c_skip, std::vector<double> c_out) {
    if (c_skip.size() != c_out.size()) throw Error("skip coefficient size mismatch");
    c_skip_ = std::move(c_skip);
    c_out_ = std::move(c_out);
  }

  bool has_skip() const { return !c_skip_.empty(); }

  MatrixXd predict(const MatrixXd& x, const MatrixXd& cond, int step) const {
    ad::Tape t;
    const auto p = bind(t, false);
    return t.value(forward(t, p, t.constant(x), t.constant(cond), step));
  }

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& p : params_) out.insert(out.end(), p.data(), p.data() + p.size());
    return out;
  }

  void set_flat(const std::vector<double>& v) {
    if (v.size() != parameter_count()) throw Error("parameter count mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(off), v.begin() + static_cast<std::ptrdiff_t>(off + p.size()),
                p.data());
      off += static_cast<std::size_t>(p.size());
    }
  }

 private:
  DenoiserConfig cfg_;
  std::vector<MatrixXd> params_;
  std::vector<double> c_skip_, c_out_;

  void add(int r, int c) { params_.push_back(MatrixXd::Zero(r, c)); }

  bool is_gain(std::size_t i) const {
    // layer-norm gains: per block offsets 0 and 6 after the 2 input params; final norm gain
    if (i < 2) return false;
    const std::size_t final_gain = 2 + 12 * static_cast<std::size_t>(cfg_.blocks);
    if (i == final_gain) return true;
    if (i > final_gain) return false;
    const std::size_t rel = (i - 2) % 12;
    return rel == 0 || rel == 6;
  }
};

// --------------------------------------------------------------- optimizer

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<MatrixXd*>& params, const std::vector<MatrixXd>& grads) {
    if (params.size() != grads.size()) throw Error("optimizer parameter/gradient count mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
        v_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    if (cfg_.lr == 0.0) return;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_), c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseAbs2();
      params[i]->array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
    }
  }

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  std::vector<MatrixXd> m_, v_;
  int t_ = 0;
};

// ----------------------------------------------------------------- sampler

/// x_hat_0 prediction plus a vector-Jacobian product w.r.t. the noisy input.
struct Prediction {
  MatrixXd x0;
  std::function<MatrixXd(const MatrixXd&)> vjp;
};

class X0Predictor {
 public:
  virtual ~X0Predictor() = default;
  virtual MatrixXd predict(const MatrixXd& xt, int t) const = 0;
  virtual Prediction predict_with_vjp(const MatrixXd& xt, int t) const = 0;
};

/// Denoiser with its (already normalized) condition bound.
class DenoiserPredictor : public X0Predictor {
 public:
  DenoiserPredictor(const Denoiser& net, MatrixXd cond) : net_(&net), cond_(std::move(cond)) {}

  MatrixXd predict(const MatrixXd& xt, int t) const override { return net_->predict(xt, cond_, t); }

  Prediction predict_with_vjp(const MatrixXd& xt, int t) const override {
    auto tape = std::make_shared<ad::Tape>();
    const auto p = net_->bind(*tape, false);
    const ad::Var x = tape->variable(xt);
    const ad::Var out = net_->forward(*tape, p, x, tape->constant(cond_), t);
    Prediction pred;
    pred.x0 = tape->value(out);
    pred.vjp = [tape, x, out](const MatrixXd& seed) {
      tape->backward(out, seed);
      return tape->grad(x);
    };
    return pred;
  }

 private:
  const Denoiser* net_;
  MatrixXd cond_;
};

/// Hook for guided steps. `gradient` returns d loss / d x_t (empty when the
/// step should be unguided); `draw` produces x_{t-1} from the posterior mean.
struct StepGuidance {
  std::function<bool(int)> active;
  std::function<MatrixXd(const MatrixXd& xt, int t, const Prediction&)> gradient;
  std::function<MatrixXd(const MatrixXd& mu, double sigma, const MatrixXd& grad, std::mt19937_64& rng)> draw;
};

struct SampleOptions {
  double clip = 3.0;  // x_hat_0 range in normalized units; <= 0 disables
};

inline MatrixXd sample(const X0Predictor& model, const NoiseSchedule& sched, Eigen::Index rows, Eigen::Index cols,
                       std::uint64_t seed, const SampleOptions& opt = {}, const StepGuidance* guide = nullptr) {
  std::mt19937_64 rng(seed);
  MatrixXd x = gaussian(rows, cols, rng);
  for (int t = sched.steps(); t >= 1; --t) {
    const bool guided = guide && guide->active && guide->active(t) && sched.sigma[static_cast<std::size_t>(t)] > 0.0;
    MatrixXd grad;
    MatrixXd x0;
    if (guided) {
      const Prediction pred = model.predict_with_vjp(x, t);
      grad = guide->gradient(x, t, pred);
      x0 = pred.x0;
    } else {
      x0 = model.predict(x, t);
    }
    if (!x0.allFinite()) throw Error("non-finite prediction at step " + std::to_string(t));
    if (opt.clip > 0.0) x0 = x0.cwiseMax(-opt.clip).cwiseMin(opt.clip);
    const MatrixXd mu = sched.posterior_mean(x0, x, t);
    const double sigma = sched.sigma[static_cast<std::size_t>(t)];
    if (guided && grad.size() != 0) {
      x = guide->draw(mu, sigma, grad, rng);
    } else if (sigma > 0.0) {
      x = mu + sigma * gaussian(rows, cols, rng);
    } else {
      x = mu;
    }
    if (!x.allFinite()) throw Error("non-finite sampler state at step " + std::to_string(t));
  }
  return x;
}

// ---------------------------------------------------------------- json

inline json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline MatrixXd matrix_from(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) throw Error("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline json row_json(const RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline RowVectorXd row_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json schedule_json(const ScheduleConfig& c) {
  return {{"steps", c.steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}, {"rescale", c.rescale},
          {"kind", "linear"}};
}

inline ScheduleConfig schedule_from(const json& j) {
  if (j.value("kind", std::string("linear")) != "linear") throw Error("unsupported schedule kind");
  return {j.at("steps").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>(),
          j.at("rescale").get<bool>()};
}

inline json denoiser_config_json(const DenoiserConfig& c) {
  return {{"x_dim", c.x_dim},       {"cond_dim", c.cond_dim}, {"width", c.width},
          {"time_dim", c.time_dim}, {"blocks", c.blocks},     {"ff_mult", c.ff_mult}};
}

inline DenoiserConfig denoiser_config_from(const json& j) {
  DenoiserConfig c{j.at("x_dim").get<int>(),    j.at("cond_dim").get<int>(), j.at("width").get<int>(),
                   j.at("time_dim").get<int>(), j.at("blocks").get<int>(),   j.at("ff_mult").get<int>()};
  c.validate();
  return c;
}

inline json normalizer_json(const Normalizer& n) { return {{"mean", row_json(n.mean)}, {"std", row_json(n.std)}}; }

inline Normalizer normalizer_from(const json& j) {
  Normalizer n{row_from(j.at("mean")), row_from(j.at("std"))};
  if (n.mean.size() != n.std.size()) throw Error("normalizer size mismatch");
  return n;
}

}  // namespace ghoi
