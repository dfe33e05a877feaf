#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "adail/env.hpp"
#include "adail/net.hpp"

namespace adail {

enum class ContextMode { none, true_params, posterior, random };

inline std::string to_string(ContextMode m) {
  switch (m) {
    case ContextMode::none: return "none";
    case ContextMode::true_params: return "true_params";
    case ContextMode::posterior: return "posterior";
    case ContextMode::random: return "random";
  }
  return "none";
}

inline ContextMode context_mode_from(const std::string& s) {
  if (s == "none") return ContextMode::none;
  if (s == "true_params") return ContextMode::true_params;
  if (s == "posterior") return ContextMode::posterior;
  if (s == "random") return ContextMode::random;
  throw std::invalid_argument("unknown context mode '" + s + "'");
}

struct ActResult {
  Vec action;
  double logp = 0.0;
};

// Context-conditioned policy pi(a | s, c). The context vector is
// concatenated to the observation; its source depends on context_mode.
struct Policy {
  std::string family_id;
  int obs_dim = 0;
  int act_dim = 0;
  bool categorical = false;
  ContextMode context_mode = ContextMode::none;
  int context_dim = 0;
  ParamNet net;  // subnet "pi."; plus "log_std" (1 x act_dim) when Gaussian

  static Policy make(const EnvFamily& family, ContextMode mode, int context_dim,
                     const std::vector<int>& hidden, rng::Stream& rs) {
    Policy p;
    p.family_id = family.family_id;
    p.obs_dim = family.obs_dim;
    p.act_dim = family.act_dim;
    p.categorical = family.action_kind == ActionKind::categorical;
    p.context_mode = mode;
    p.context_dim = mode == ContextMode::none ? 0 : context_dim;
    std::vector<int> widths;
    widths.push_back(p.obs_dim + p.context_dim);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(p.categorical ? 2 : p.act_dim);
    init_mlp(p.net, "pi.", widths, rs);
    if (!p.categorical) p.net.add("log_std", Mat::Zero(1, p.act_dim));
    return p;
  }

  int input_width() const { return obs_dim + context_dim; }

  RowVec assemble_input(const Vec& obs, const Vec& ctx) const {
    if (static_cast<int>(ctx.size()) != context_dim)
      throw std::invalid_argument("Policy: context width " +
                                  std::to_string(ctx.size()) + " != expected " +
                                  std::to_string(context_dim));
    RowVec x(input_width());
    x.head(obs_dim) = obs.transpose();
    if (context_dim > 0) x.tail(context_dim) = ctx.transpose();
    return x;
  }

  ActResult act(const Vec& obs, const Vec& ctx, rng::Stream& rs,
                bool deterministic = false) const {
    RowVec out = mlp_apply(net, "pi.", assemble_input(obs, ctx));
    ActResult r;
    if (categorical) {
      int a;
      if (deterministic) {
        a = 0;
        for (int i = 1; i < out.size(); ++i)
          if (out(i) > out(a)) a = i;
      } else {
        // inverse-CDF sample from softmax probabilities
        double m = out.maxCoeff();
        Eigen::ArrayXd p = (out.array() - m).exp();
        p /= p.sum();
        double u = rs.uniform();
        double acc = 0.0;
        a = static_cast<int>(out.size()) - 1;
        for (int i = 0; i < out.size(); ++i) {
          acc += p(i);
          if (u < acc) {
            a = i;
            break;
          }
        }
      }
      r.action = Vec::Constant(1, static_cast<double>(a));
      r.logp = categorical_logp(out, a);
    } else {
      GaussianHead head = gaussian_head(out, net.at("log_std").row(0));
      RowVec a(act_dim);
      if (deterministic) {
        a = head.mean;
      } else {
        for (int i = 0; i < act_dim; ++i)
          a(i) = head.mean(i) + head.std(i) * rs.normal();
      }
      r.action = a.transpose();
      r.logp = gaussian_logp(a, head.mean, head.std);
    }
    return r;
  }

  // exact log density of a given action under the current parameters
  double logp_of(const Vec& obs, const Vec& ctx, const Vec& action) const {
    RowVec out = mlp_apply(net, "pi.", assemble_input(obs, ctx));
    if (categorical)
      return categorical_logp(out, static_cast<int>(action(0)));
    GaussianHead head = gaussian_head(out, net.at("log_std").row(0));
    return gaussian_logp(action.transpose(), head.mean, head.std);
  }
};

struct ValueFn {
  ParamNet net;  // subnet "vf."

  static ValueFn make(int input_width, const std::vector<int>& hidden,
                      rng::Stream& rs) {
    ValueFn v;
    std::vector<int> widths;
    widths.push_back(input_width);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    init_mlp(v.net, "vf.", widths, rs);
    return v;
  }

  double value(const RowVec& x) const { return mlp_apply(net, "vf.", x)(0); }

  Vec value_batch(const Mat& x) const {
    return mlp_apply_batch(net, "vf.", x).col(0);
  }
};

// On-policy batch of whole episodes.
struct RolloutBatch {
  Mat obs;                  // N x obs_dim
  Mat ctx;                  // N x context_dim
  Mat actions;              // N x act_dim (categorical: the index)
  Vec logp;                 // behavior log probabilities at collection time
  Vec reward;               // learning reward (imitation or true)
  Vec r_true;               // environment reward, diagnostics only
  std::vector<char> done;   // episode-terminal flags
  Vec value;                // critic estimates
  Vec adv;
  Vec ret;
  std::vector<int> episode_start;        // start index of each episode
  std::vector<DynParams> episode_c;      // generating parameters per episode
  std::vector<Transition> transitions;   // for discriminator / posterior use

  int size() const { return static_cast<int>(obs.rows()); }
  int episodes() const { return static_cast<int>(episode_start.size()); }

  Mat policy_input() const {
    Mat x(obs.rows(), obs.cols() + ctx.cols());
    x.leftCols(obs.cols()) = obs;
    if (ctx.cols() > 0) x.rightCols(ctx.cols()) = ctx;
    return x;
  }
};

// Generalized advantage estimation. Episodes are complete, so the
// recursion cuts at every terminal step with no bootstrap value.
inline void compute_gae(RolloutBatch& b, double gamma, double lambda_gae) {
  int n = b.size();
  b.adv = Vec::Zero(n);
  b.ret = Vec::Zero(n);
  double gl = gamma * lambda_gae;
  for (std::size_t e = 0; e < b.episode_start.size(); ++e) {
    int start = b.episode_start[e];
    int end = (e + 1 < b.episode_start.size())
                  ? b.episode_start[e + 1]
                  : n;
    double carry = 0.0;
    for (int t = end - 1; t >= start; --t) {
      double next_v = (t + 1 < end && !b.done[t]) ? b.value(t + 1) : 0.0;
      double delta = b.reward(t) + gamma * next_v - b.value(t);
      carry = delta + gl * ((t + 1 < end && !b.done[t]) ? carry : 0.0);
      b.adv(t) = carry;
    }
  }
  b.ret = b.adv + b.value;
}

inline void normalize_advantages(RolloutBatch& b) {
  int n = b.size();
  if (n == 0) return;
  double mean = b.adv.mean();
  double var = (b.adv.array() - mean).square().sum() / n;
  b.adv = (b.adv.array() - mean) / (std::sqrt(var) + 1e-8);
}

struct PpoConfig {
  double clip = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  int epochs = 10;
  int minibatch = 64;
  double target_kl = 0.02;
};

struct PpoDiag {
  double pi_loss = 0.0;
  double v_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  int epochs_used = 0;
  int skipped_minibatches = 0;
};

namespace detail {

struct PpoGraphOut {
  Node* logp;      // B x 1
  Node* entropy;   // 1 x 1
  Node* value;     // B x 1
};

inline PpoGraphOut ppo_forward(Graph& g, const Policy& policy, const ValueFn& vf,
                               const Mat& x_mb, const Mat& a_mb) {
  PpoGraphOut out;
  Node* x = g.constant(x_mb);
  Node* pi_out = mlp_forward(g, policy.net, "pi.", x);
  if (policy.categorical) {
    std::vector<int> idx(a_mb.rows());
    for (int i = 0; i < a_mb.rows(); ++i) idx[i] = static_cast<int>(a_mb(i, 0));
    Node* lsm = g.log_softmax(pi_out);
    out.logp = g.gather_cols(lsm, idx);
    // H = -E_rows sum_a p log p
    Node* plogp = g.mul(g.exp_(lsm), lsm);
    out.entropy = g.neg(g.mean(g.row_sum(plogp)));
  } else {
    Node* log_std = g.leaf("log_std", policy.net.at("log_std"));
    out.logp = gaussian_logp_node(g, pi_out, log_std, a_mb);
    // H = sum log sigma + d/2 (1 + log 2 pi)
    constexpr double kLog2Pi = 1.8378770664093454835606594728112;
    out.entropy = g.add_scalar(g.sum(log_std),
                               0.5 * policy.act_dim * (1.0 + kLog2Pi));
  }
  out.value = mlp_forward(g, vf.net, "vf.", x);
  return out;
}

inline GradMap filter_grads(const GradMap& grads, const ParamNet& net) {
  GradMap out;
  for (auto& [name, g] : grads)
    if (net.has(name)) out[name] = g;
  return out;
}

}  // namespace detail

// Clipped-surrogate PPO step over the batch. Old log probabilities are
// captured from the current parameters in the epoch-one minibatch grouping
// before any update, so first-minibatch importance ratios are exactly one.
inline PpoDiag ppo_update(Policy& policy, ValueFn& vf, const RolloutBatch& batch,
                          const PpoConfig& cfg, rng::Stream& rs,
                          AdamState& adam_pi, AdamState& adam_vf) {
  PpoDiag diag;
  int n = batch.size();
  if (n == 0) return diag;
  Mat X = batch.policy_input();

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto shuffle = [&rs](std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[i], v[rs.uniform_int(i + 1)]);
  };
  shuffle(perm);
  std::vector<int> epoch1 = perm;

  auto slice = [&](const std::vector<int>& idx, int lo, int hi, const Mat& src) {
    Mat out(hi - lo, src.cols());
    for (int i = lo; i < hi; ++i) out.row(i - lo) = src.row(idx[i]);
    return out;
  };

  // capture pass: pre-update log probabilities in epoch-one grouping
  Vec logp_old(n);
  for (int lo = 0; lo < n; lo += cfg.minibatch) {
    int hi = std::min(n, lo + cfg.minibatch);
    Graph g;
    auto fwd = detail::ppo_forward(g, policy, vf, slice(epoch1, lo, hi, X),
                                   slice(epoch1, lo, hi, batch.actions));
    for (int i = lo; i < hi; ++i) logp_old(epoch1[i]) = fwd.logp->value(i - lo, 0);
  }

  double kl_sum = 0.0, clip_sum = 0.0, ent_sum = 0.0, pi_sum = 0.0, v_sum = 0.0;
  long long mb_count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0) shuffle(perm);
    const std::vector<int>& order = (epoch == 0) ? epoch1 : perm;
    double epoch_kl = 0.0;
    int epoch_mbs = 0;
    for (int lo = 0; lo < n; lo += cfg.minibatch) {
      int hi = std::min(n, lo + cfg.minibatch);
      int b = hi - lo;
      Mat adv_mb(b, 1), ret_mb(b, 1), lpo_mb(b, 1);
      for (int i = lo; i < hi; ++i) {
        adv_mb(i - lo, 0) = batch.adv(order[i]);
        ret_mb(i - lo, 0) = batch.ret(order[i]);
        lpo_mb(i - lo, 0) = logp_old(order[i]);
      }
      Graph g;
      auto fwd = detail::ppo_forward(g, policy, vf, slice(order, lo, hi, X),
                                     slice(order, lo, hi, batch.actions));
      Node* ratio = g.exp_(g.sub(fwd.logp, g.constant(lpo_mb)));
      Node* adv_c = g.constant(adv_mb);
      Node* surr = g.emin(g.mul(ratio, adv_c),
                          g.mul(g.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv_c));
      Node* pi_loss = g.neg(g.mean(surr));
      Node* v_loss = g.mean(g.square(g.sub(fwd.value, g.constant(ret_mb))));
      Node* total = g.add(g.add(pi_loss, g.scale(fwd.entropy, -cfg.ent_coef)),
                          g.scale(v_loss, cfg.vf_coef));
      if (!std::isfinite(total->value(0, 0))) {
        ++diag.skipped_minibatches;
        continue;
      }
      GradMap grads = g.backward(total);
      adam_step(policy.net, detail::filter_grads(grads, policy.net), adam_pi);
      adam_step(vf.net, detail::filter_grads(grads, vf.net), adam_vf);

      double kl = 0.0, clipped = 0.0;
      for (int i = 0; i < b; ++i) {
        double r = ratio->value(i, 0);
        kl += (r - 1.0) - std::log(r);
        if (std::abs(r - 1.0) > cfg.clip) clipped += 1.0;
      }
      kl /= b;
      clipped /= b;
      epoch_kl += kl;
      ++epoch_mbs;
      kl_sum += kl;
      clip_sum += clipped;
      ent_sum += fwd.entropy->value(0, 0);
      pi_sum += pi_loss->value(0, 0);
      v_sum += v_loss->value(0, 0);
      ++mb_count;
    }
    diag.epochs_used = epoch + 1;
    if (epoch_mbs > 0 && epoch_kl / epoch_mbs > cfg.target_kl) break;
  }
  if (mb_count > 0) {
    diag.approx_kl = kl_sum / mb_count;
    diag.clip_frac = clip_sum / mb_count;
    diag.entropy = ent_sum / mb_count;
    diag.pi_loss = pi_sum / mb_count;
    diag.v_loss = v_sum / mb_count;
  }
  return diag;
}

}  // namespace adail
