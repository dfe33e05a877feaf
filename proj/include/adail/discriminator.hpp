#pragma once

#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "adail/env.hpp"
#include "adail/net.hpp"

namespace adail {

struct DiscDiag {
  double loss = 0.0;
  double accuracy = 0.0;
  double reg_mse = 0.0;
  bool skipped = false;  // non-finite loss, parameters untouched
};

// GAIL discriminator: a shared feature trunk, an expert/imitator logit
// head, and a dynamics-regression head reached through a gradient
// reversal layer. Expert pairs are labeled 1, imitator pairs 0, and the
// imitation reward is -log(1 - D) clipped to [reward_lo, reward_hi].
struct Discriminator {
  int obs_dim = 0;
  int act_dim = 0;
  int param_count = 0;
  bool state_only = false;  // trunk consumes (s, s') instead of (s, a)
  double lambda_grl = 1.0;
  double reward_lo = 0.0;
  double reward_hi = 10.0;
  Normalizer obs_norm;
  EnvFamily family;
  ParamNet net;  // subnets "trunk.", "cls.", "reg."
  AdamState adam;

  static Discriminator make(const EnvFamily& fam, const Normalizer& obs_norm,
                            const std::vector<int>& trunk_hidden,
                            double lambda_grl, double reward_lo, double reward_hi,
                            bool state_only, double lr, rng::Stream& rs) {
    Discriminator d;
    d.obs_dim = fam.obs_dim;
    d.act_dim = fam.act_dim;
    d.param_count = fam.param_count();
    d.state_only = state_only;
    d.lambda_grl = lambda_grl;
    d.reward_lo = reward_lo;
    d.reward_hi = reward_hi;
    d.obs_norm = obs_norm;
    d.family = fam;
    std::vector<int> trunk{d.input_width()};
    trunk.insert(trunk.end(), trunk_hidden.begin(), trunk_hidden.end());
    init_mlp(d.net, "trunk.", trunk, rs);
    init_mlp(d.net, "cls.", {trunk.back(), 1}, rs);
    init_mlp(d.net, "reg.", {trunk.back(), d.param_count}, rs);
    d.adam.lr = lr;
    return d;
  }

  int input_width() const {
    return state_only ? 2 * obs_dim
                      : obs_dim + (family.action_kind == ActionKind::categorical
                                       ? 1
                                       : act_dim);
  }

  RowVec input_row(const Vec& s, const Vec& a, const Vec& s_next) const {
    RowVec x(input_width());
    Vec sn = obs_norm.apply(s);
    x.head(obs_dim) = sn.transpose();
    if (state_only) {
      x.tail(obs_dim) = obs_norm.apply(s_next).transpose();
    } else {
      Vec ae = family.encode_action(a);
      x.tail(ae.size()) = ae.transpose();
    }
    return x;
  }

  Mat input_batch(const std::vector<Transition>& ts,
                  const std::vector<int>& idx) const {
    Mat x(idx.size(), input_width());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Transition& t = ts[idx[i]];
      x.row(i) = input_row(t.s, t.a, t.s_next);
    }
    return x;
  }

  // trunk features are tanh activations of the last trunk layer
  Mat features(const Mat& x) const {
    return mlp_apply_batch(net, "trunk.", x).array().tanh();
  }

  double cls_logit(const Vec& s, const Vec& a, const Vec& s_next) const {
    Mat f = features(input_row(s, a, s_next));
    return mlp_apply_batch(net, "cls.", f)(0, 0);
  }

  // (expert probability, predicted normalized dynamics)
  std::pair<double, Vec> forward(const Vec& s, const Vec& a,
                                 const Vec& s_next) const {
    Mat f = features(input_row(s, a, s_next));
    double z = mlp_apply_batch(net, "cls.", f)(0, 0);
    Vec c_pred = mlp_apply_batch(net, "reg.", f).row(0).transpose();
    return {1.0 / (1.0 + std::exp(-z)), c_pred};
  }

  // r = clip(-log(1 - sigmoid(z))) = clip(softplus(z))
  double reward(const Vec& s, const Vec& a, const Vec& s_next) const {
    double z = cls_logit(s, a, s_next);
    double r = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    return std::min(std::max(r, reward_lo), reward_hi);
  }

  Vec reward_batch(const std::vector<Transition>& ts) const {
    std::vector<int> idx(ts.size());
    std::iota(idx.begin(), idx.end(), 0);
    Mat f = features(input_batch(ts, idx));
    Mat z = mlp_apply_batch(net, "cls.", f);
    Vec r(ts.size());
    for (int i = 0; i < r.size(); ++i) {
      double zz = z(i, 0);
      double rr = std::max(zz, 0.0) + std::log1p(std::exp(-std::abs(zz)));
      r(i) = std::min(std::max(rr, reward_lo), reward_hi);
    }
    return r;
  }

  // One cross-entropy step on stacked (imitator, expert) rows.
  DiscDiag update_cls(const Mat& policy_x, const Mat& expert_x) {
    if (policy_x.rows() == 0 || expert_x.rows() == 0)
      throw std::invalid_argument("disc update: empty batch");
    int np = static_cast<int>(policy_x.rows());
    int ne = static_cast<int>(expert_x.rows());
    Mat x(np + ne, policy_x.cols());
    x.topRows(np) = policy_x;
    x.bottomRows(ne) = expert_x;
    Mat labels(np + ne, 1);
    labels.topRows(np).setZero();
    labels.bottomRows(ne).setOnes();

    Graph g;
    Node* feat = g.tanh_(mlp_forward(g, net, "trunk.", g.constant(x)));
    Node* logits = mlp_forward(g, net, "cls.", feat);
    Node* loss = g.mean(g.bce_with_logits(logits, labels));

    DiscDiag diag;
    diag.loss = loss->value(0, 0);
    int correct = 0;
    for (int i = 0; i < np + ne; ++i) {
      bool said_expert = logits->value(i, 0) > 0.0;
      if (said_expert == (labels(i, 0) > 0.5)) ++correct;
    }
    diag.accuracy = static_cast<double>(correct) / (np + ne);
    if (!std::isfinite(diag.loss)) {
      diag.skipped = true;
      return diag;
    }
    adam_step(net, g.backward(loss), adam);
    return diag;
  }

  // Gradient map of one regression step; exposed so the gradient-reversal
  // algebra can be verified with and without the reversal node.
  GradMap reg_grads(const Mat& policy_x, const Mat& c_labels, bool with_grl,
                    double* loss_out = nullptr) const {
    if (policy_x.rows() == 0)
      throw std::invalid_argument("disc update: empty batch");
    if (c_labels.rows() != policy_x.rows() ||
        c_labels.cols() != param_count)
      throw std::invalid_argument("disc update: dynamics labels missing or misshapen");
    Graph g;
    Node* feat = g.tanh_(mlp_forward(g, net, "trunk.", g.constant(policy_x)));
    Node* head_in = with_grl ? g.grl(feat, lambda_grl) : feat;
    Node* pred = mlp_forward(g, net, "reg.", head_in);
    Node* se = g.row_sum(g.square(g.sub(pred, g.constant(c_labels))));
    Node* loss = g.scale(g.mean(se), 0.5);
    if (loss_out) *loss_out = loss->value(0, 0);
    return g.backward(loss);
  }

  // One reversed-gradient regression step on imitator samples labeled with
  // their generating dynamics (normalized). The classifier head is untouched.
  DiscDiag update_reg(const Mat& policy_x, const Mat& c_labels) {
    DiscDiag diag;
    GradMap grads = reg_grads(policy_x, c_labels, true, &diag.reg_mse);
    if (!std::isfinite(diag.reg_mse)) {
      diag.skipped = true;
      return diag;
    }
    adam_step(net, grads, adam);
    return diag;
  }
};

// Analytic reward mapping used by the reward contract tests.
inline double imitation_reward_from_p(double p_expert, double lo = 0.0,
                                      double hi = 10.0) {
  double r = -std::log1p(-p_expert);
  return std::min(std::max(r, lo), hi);
}

}  // namespace adail
