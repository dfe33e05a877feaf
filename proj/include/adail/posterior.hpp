#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adail/env.hpp"
#include "adail/net.hpp"

namespace adail {

// Per-dimension Huber penalty summed over dimensions, averaged over the
// batch. Quadratic inside delta, linear outside, continuous at the joint.
inline double huber_loss(const Mat& c, const Mat& c_hat, double delta) {
  if (delta <= 0.0) throw std::invalid_argument("huber_loss: delta must be > 0");
  if (c.rows() != c_hat.rows() || c.cols() != c_hat.cols())
    throw std::invalid_argument("huber_loss: shape mismatch");
  double total = 0.0;
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) {
      double e = std::abs(c(i, j) - c_hat(i, j));
      total += e < delta ? 0.5 * e * e : delta * e - 0.5 * delta * delta;
    }
  return total / static_cast<double>(c.rows());
}

struct PostDiag {
  double loss = 0.0;
  bool skipped = false;
};

// Supervised dynamics posterior Q(c | s, a, s'): regression to the
// normalized ground-truth parameters under a Huber loss.
struct Posterior {
  int obs_dim = 0;
  int act_dim = 0;
  int param_count = 0;
  double delta = 1.0;
  Normalizer obs_norm;
  EnvFamily family;
  ParamNet net;  // subnet "post."
  AdamState adam;

  static Posterior make(const EnvFamily& fam, const Normalizer& obs_norm,
                        const std::vector<int>& hidden, double delta, double lr,
                        rng::Stream& rs) {
    Posterior q;
    q.obs_dim = fam.obs_dim;
    q.act_dim = fam.act_dim;
    q.param_count = fam.param_count();
    q.delta = delta;
    q.obs_norm = obs_norm;
    q.family = fam;
    std::vector<int> widths{q.input_width()};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(q.param_count);
    init_mlp(q.net, "post.", widths, rs);
    q.adam.lr = lr;
    return q;
  }

  int input_width() const {
    int a = family.action_kind == ActionKind::categorical ? 1 : act_dim;
    return 2 * obs_dim + a;
  }

  RowVec input_row(const Vec& s, const Vec& a, const Vec& s_next) const {
    Vec ae = family.encode_action(a);
    RowVec x(input_width());
    x.head(obs_dim) = obs_norm.apply(s).transpose();
    x.segment(obs_dim, ae.size()) = ae.transpose();
    x.tail(obs_dim) = obs_norm.apply(s_next).transpose();
    return x;
  }

  // input row for the episode-start prime query: a no-op transition from
  // the initial state with a zero (encoded) action
  RowVec prime_row(const Vec& s0) const {
    RowVec x = RowVec::Zero(input_width());
    x.head(obs_dim) = obs_norm.apply(s0).transpose();
    x.tail(obs_dim) = obs_norm.apply(s0).transpose();
    return x;
  }

  // deterministic prediction in normalized space, clipped to [-1, 1]
  Vec predict_row(const RowVec& x) const {
    RowVec out = mlp_apply(net, "post.", x);
    return out.transpose().cwiseMax(-1.0).cwiseMin(1.0);
  }

  Vec predict(const Vec& s, const Vec& a, const Vec& s_next) const {
    return predict_row(input_row(s, a, s_next));
  }

  // One Adam step on the mean Huber loss over a labeled batch.
  PostDiag update(const Mat& x, const Mat& c_labels) {
    if (c_labels.rows() != x.rows() || c_labels.cols() != param_count)
      throw std::invalid_argument("posterior update: labels missing or misshapen");
    Graph g;
    Node* pred = mlp_forward(g, net, "post.", g.constant(x));
    Node* resid = g.sub(pred, g.constant(c_labels));
    Node* per_row = g.row_sum(g.huber(resid, delta));
    Node* loss = g.mean(per_row);
    PostDiag diag;
    diag.loss = loss->value(0, 0);
    if (!std::isfinite(diag.loss)) {
      diag.skipped = true;
      return diag;
    }
    adam_step(net, g.backward(loss), adam);
    return diag;
  }
};

// A prediction source for evaluation-time conditioning: either a trained
// posterior, an encoder mean, or an oracle used in equivalence tests.
using Predictor = std::function<Vec(const Vec& s, const Vec& a, const Vec& s_next)>;
using PrimePredictor = std::function<Vec(const Vec& s0)>;

struct PredictorPair {
  Predictor step;    // called on each observed transition
  PrimePredictor prime;  // called once on the initial state
  int dim = 0;
};

inline PredictorPair make_predictor(const Posterior& q) {
  return {[&q](const Vec& s, const Vec& a, const Vec& sn) {
            return q.predict(s, a, sn);
          },
          [&q](const Vec& s0) { return q.predict_row(q.prime_row(s0)); },
          q.param_count};
}

// Exponential moving average of per-transition predictions; the policy's
// evaluation-time context. Starts at the normalized prior mean (zero), is
// initialized by the first observation, and stays clipped to [-1, 1].
struct OnlineEstimate {
  Vec ema;
  double beta = 0.9;
  long long steps_seen = 0;

  static OnlineEstimate make(int dim, double beta) {
    return {Vec::Zero(dim), beta, 0};
  }

  void update(const Vec& pred) {
    if (steps_seen == 0)
      ema = pred;
    else
      ema = beta * ema + (1.0 - beta) * pred;
    ema = ema.cwiseMax(-1.0).cwiseMin(1.0);
    ++steps_seen;
  }

  const Vec& context() const { return ema; }
};

// ---------------------------------------------------------------------------
// Gradient-level restatement of the Huber / log-likelihood correspondence:
// inside delta the Huber gradient is proportional (with a positive
// constant) to the gradient of a Gaussian log density, outside delta to
// that of a Laplace log density.

struct Lemma1Report {
  int n_inside = 0;
  int n_outside = 0;
  double inside_c_min = 0.0, inside_c_max = 0.0;
  double outside_c_min = 0.0, outside_c_max = 0.0;
  // max |grad_huber + grad_logp| with sigma = 1 (inside) and b = 1/delta
  // (outside), where the constants are exactly one
  double inside_equal_err = 0.0;
  double outside_equal_err = 0.0;
  bool inside_ok = false;
  bool outside_ok = false;
};

// residuals are e = c - c_hat samples; gradients are taken wrt c_hat
inline Lemma1Report lemma1_gradient_check(double delta,
                                          const std::vector<double>& residuals) {
  Lemma1Report rep;
  bool first_in = true, first_out = true;
  for (double e : residuals) {
    if (e == 0.0) continue;  // both gradients vanish; ratio undefined
    double g_huber = -std::min(std::max(e, -delta), delta);
    if (std::abs(e) < delta) {
      double g_gauss = e;  // d/dc_hat log N(c | c_hat, 1)
      double c = -g_huber / g_gauss;
      rep.inside_equal_err =
          std::max(rep.inside_equal_err, std::abs(g_huber + g_gauss));
      if (first_in) {
        rep.inside_c_min = rep.inside_c_max = c;
        first_in = false;
      } else {
        rep.inside_c_min = std::min(rep.inside_c_min, c);
        rep.inside_c_max = std::max(rep.inside_c_max, c);
      }
      ++rep.n_inside;
    } else {
      double g_laplace = delta * (e > 0 ? 1.0 : -1.0);  // b = 1/delta
      double c = -g_huber / g_laplace;
      rep.outside_equal_err =
          std::max(rep.outside_equal_err, std::abs(g_huber + g_laplace));
      if (first_out) {
        rep.outside_c_min = rep.outside_c_max = c;
        first_out = false;
      } else {
        rep.outside_c_min = std::min(rep.outside_c_min, c);
        rep.outside_c_max = std::max(rep.outside_c_max, c);
      }
      ++rep.n_outside;
    }
  }
  rep.inside_ok = rep.n_inside > 0 && rep.inside_c_min > 0.0 &&
                  std::abs(rep.inside_c_max - rep.inside_c_min) < 1e-12;
  rep.outside_ok = rep.n_outside > 0 && rep.outside_c_min > 0.0 &&
                   std::abs(rep.outside_c_max - rep.outside_c_min) < 1e-12;
  return rep;
}

// ---------------------------------------------------------------------------
// Ring buffer of posterior training samples across sampled environments.

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(RowVec x, RowVec c) {
    if (xs_.size() < capacity_) {
      xs_.push_back(std::move(x));
      cs_.push_back(std::move(c));
    } else {
      xs_[next_] = std::move(x);
      cs_[next_] = std::move(c);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return xs_.size(); }

  void sample(int n, rng::Stream& rs, Mat& x_out, Mat& c_out) const {
    if (xs_.empty()) throw std::logic_error("ReplayBuffer: empty");
    x_out.resize(n, xs_[0].size());
    c_out.resize(n, cs_[0].size());
    for (int i = 0; i < n; ++i) {
      int j = rs.uniform_int(static_cast<int>(xs_.size()));
      x_out.row(i) = xs_[j];
      c_out.row(i) = cs_[j];
    }
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<RowVec> xs_;
  std::vector<RowVec> cs_;
};

}  // namespace adail
