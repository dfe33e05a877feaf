#pragma once

#include <string>
#include <utility>
#include <vector>

#include "adail/env.hpp"
#include "adail/net.hpp"
#include "adail/posterior.hpp"

namespace adail {

constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 10.0;

// Unsupervised dynamics encoder Q(c | s, a, s') producing a diagonal
// Gaussian over the latent code.
struct Encoder {
  int obs_dim = 0;
  int act_dim = 0;
  int latent_dim = 0;
  Normalizer obs_norm;
  EnvFamily family;
  ParamNet net;  // subnet "enc." -> (mu, log_var)
  AdamState adam;

  static Encoder make(const EnvFamily& fam, const Normalizer& obs_norm,
                      int latent_dim, const std::vector<int>& hidden, double lr,
                      rng::Stream& rs) {
    Encoder e;
    e.obs_dim = fam.obs_dim;
    e.act_dim = fam.act_dim;
    e.latent_dim = latent_dim;
    e.obs_norm = obs_norm;
    e.family = fam;
    std::vector<int> widths{e.input_width()};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(2 * latent_dim);
    init_mlp(e.net, "enc.", widths, rs);
    e.adam.lr = lr;
    return e;
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

  RowVec prime_row(const Vec& s0) const {
    RowVec x = RowVec::Zero(input_width());
    x.head(obs_dim) = obs_norm.apply(s0).transpose();
    x.tail(obs_dim) = obs_norm.apply(s0).transpose();
    return x;
  }

  // (mu, var) with log variance clamped to [-10, 10]
  std::pair<Vec, Vec> encode_row(const RowVec& x) const {
    RowVec out = mlp_apply(net, "enc.", x);
    Vec mu = out.head(latent_dim).transpose();
    Vec lv = out.tail(latent_dim).transpose().cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
    return {mu, lv.array().exp()};
  }

  std::pair<Vec, Vec> encode(const Vec& s, const Vec& a, const Vec& s_next) const {
    return encode_row(input_row(s, a, s_next));
  }
};

// Forward dynamics decoder P(s' | s, a, c); consumes the state-action
// pair and the latent code only, never the next state.
struct Decoder {
  int obs_dim = 0;
  int act_dim = 0;
  int latent_dim = 0;
  Normalizer obs_norm;
  EnvFamily family;
  ParamNet net;  // subnet "dec."
  AdamState adam;

  static Decoder make(const EnvFamily& fam, const Normalizer& obs_norm,
                      int latent_dim, const std::vector<int>& hidden, double lr,
                      rng::Stream& rs) {
    Decoder d;
    d.obs_dim = fam.obs_dim;
    d.act_dim = fam.act_dim;
    d.latent_dim = latent_dim;
    d.obs_norm = obs_norm;
    d.family = fam;
    std::vector<int> widths{d.sa_width() + latent_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(fam.obs_dim);
    init_mlp(d.net, "dec.", widths, rs);
    d.adam.lr = lr;
    return d;
  }

  int sa_width() const {
    int a = family.action_kind == ActionKind::categorical ? 1 : act_dim;
    return obs_dim + a;
  }

  RowVec sa_row(const Vec& s, const Vec& a) const {
    Vec ae = family.encode_action(a);
    RowVec x(sa_width());
    x.head(obs_dim) = obs_norm.apply(s).transpose();
    x.tail(ae.size()) = ae.transpose();
    return x;
  }

  // predicted normalized next observation
  Vec predict(const Vec& s, const Vec& a, const Vec& c) const {
    RowVec x(sa_width() + latent_dim);
    x.head(sa_width()) = sa_row(s, a);
    x.tail(latent_dim) = c.transpose();
    return mlp_apply(net, "dec.", x).transpose();
  }
};

struct VaeConfig {
  double lambda_contrastive = 0.1;
  double d0 = 10.0;
  int latent_dim = 1;
  int pairs = 32;
  double recon_var = 1.0;  // decoder likelihood variance
};

// Closed-form KL between diagonal Gaussians.
inline double kl_diag_gaussians(const Vec& mu1, const Vec& var1, const Vec& mu2,
                                const Vec& var2) {
  if (mu1.size() != mu2.size() || var1.size() != var2.size() ||
      mu1.size() != var1.size())
    throw std::invalid_argument("kl_diag_gaussians: dimension mismatch");
  double kl = 0.0;
  for (int i = 0; i < mu1.size(); ++i) {
    if (var1(i) <= 0.0 || var2(i) <= 0.0)
      throw std::invalid_argument("kl_diag_gaussians: variances must be positive");
    double d = mu2(i) - mu1(i);
    kl += 0.5 * (var1(i) / var2(i) + d * d / var2(i) - 1.0 +
                 std::log(var2(i)) - std::log(var1(i)));
  }
  return kl;
}

// Symmetrized KL, used when comparing posterior separation.
inline double kl_symmetric(const std::pair<Vec, Vec>& p,
                           const std::pair<Vec, Vec>& q) {
  return 0.5 * (kl_diag_gaussians(p.first, p.second, q.first, q.second) +
                kl_diag_gaussians(q.first, q.second, p.first, p.second));
}

namespace detail {

struct EncOut {
  Node* mu;       // B x d
  Node* log_var;  // B x d, clamped
};

inline EncOut encoder_forward(Graph& g, const Encoder& enc, const Mat& x) {
  Node* out = mlp_forward(g, enc.net, "enc.", g.constant(x));
  EncOut eo;
  eo.mu = g.slice_cols(out, 0, enc.latent_dim);
  eo.log_var =
      g.clip(g.slice_cols(out, enc.latent_dim, enc.latent_dim), kLogVarMin, kLogVarMax);
  return eo;
}

// per-row KL( N(mu1, e^lv1) || N(mu2, e^lv2) ), B x 1
inline Node* kl_rows(Graph& g, Node* mu1, Node* lv1, Node* mu2, Node* lv2) {
  Node* ratio = g.exp_(g.sub(lv1, lv2));
  Node* dm = g.sub(mu2, mu1);
  Node* quad = g.mul(g.square(dm), g.exp_(g.neg(lv2)));
  Node* sum = g.add(g.add(ratio, quad), g.sub(lv2, lv1));
  return g.scale(g.row_sum(g.add_scalar(sum, -1.0)), 0.5);
}

// per-row KL to the standard normal prior
inline Node* kl_to_prior_rows(Graph& g, Node* mu, Node* lv) {
  Node* var = g.exp_(lv);
  Node* sum = g.add(g.sub(var, lv), g.square(mu));
  return g.scale(g.row_sum(g.add_scalar(sum, -1.0)), 0.5);
}

}  // namespace detail

// One reparameterized latent draw: c = mu + sqrt(var) * eps.
inline Vec reparam_sample(const Vec& mu, const Vec& var, rng::Stream& rs) {
  Vec c(mu.size());
  for (int i = 0; i < mu.size(); ++i) c(i) = mu(i) + std::sqrt(var(i)) * rs.normal();
  return c;
}

// ELBO with a unit-variance Gaussian likelihood of the normalized next
// observation around the decoder output; one reparameterized sample per
// datum with externally supplied noise (common random numbers).
inline Node* elbo_node(Graph& g, const Encoder& enc, const Decoder& dec,
                       const Mat& x_enc, const Mat& x_sa, const Mat& s_next_norm,
                       const Mat& eps, double recon_var = 1.0) {
  constexpr double kLog2Pi = 1.8378770664093454835606594728112;
  auto eo = detail::encoder_forward(g, enc, x_enc);
  Node* std_dev = g.exp_(g.scale(eo.log_var, 0.5));
  Node* c = g.add(eo.mu, g.mul(std_dev, g.constant(eps)));
  Node* dec_in = g.concat_cols(g.constant(x_sa), c);
  Node* pred = mlp_forward(g, dec.net, "dec.", dec_in);
  Node* se = g.row_sum(g.square(g.sub(pred, g.constant(s_next_norm))));
  double d = static_cast<double>(s_next_norm.cols());
  Node* recon = g.add_scalar(g.scale(se, -0.5 / recon_var),
                             -0.5 * d * (kLog2Pi + std::log(recon_var)));
  Node* kl = detail::kl_to_prior_rows(g, eo.mu, eo.log_var);
  return g.mean(g.sub(recon, kl));
}

struct VaeBatch {
  Mat x_enc;        // B x encoder input
  Mat x_sa;         // B x decoder (s, a) input
  Mat s_next_norm;  // B x obs_dim
  std::vector<int> traj_id;  // trajectory of each row
};

inline VaeBatch make_vae_batch(const Encoder& enc, const Decoder& dec,
                               const std::vector<Transition>& ts,
                               const std::vector<int>& traj_id) {
  VaeBatch b;
  int n = static_cast<int>(ts.size());
  b.x_enc.resize(n, enc.input_width());
  b.x_sa.resize(n, dec.sa_width());
  b.s_next_norm.resize(n, enc.obs_dim);
  b.traj_id = traj_id;
  for (int i = 0; i < n; ++i) {
    b.x_enc.row(i) = enc.input_row(ts[i].s, ts[i].a, ts[i].s_next);
    b.x_sa.row(i) = dec.sa_row(ts[i].s, ts[i].a);
    b.s_next_norm.row(i) = enc.obs_norm.apply(ts[i].s_next).transpose();
  }
  return b;
}

inline double elbo(const Encoder& enc, const Decoder& dec, const VaeBatch& b,
                   rng::Stream& rs, double recon_var = 1.0) {
  Mat eps(b.x_enc.rows(), enc.latent_dim);
  for (int i = 0; i < eps.rows(); ++i)
    for (int j = 0; j < eps.cols(); ++j) eps(i, j) = rs.normal();
  Graph g;
  return elbo_node(g, enc, dec, b.x_enc, b.x_sa, b.s_next_norm, eps, recon_var)
      ->value(0, 0);
}

// KL(q(same0) || q(same1)) - min(KL(q(diff0) || q(diff1)), D0), averaged
// over pairs. same rows come from one trajectory, diff rows from two.
inline Node* contrastive_node(Graph& g, const Encoder& enc, const Mat& same0,
                              const Mat& same1, const Mat& diff0, const Mat& diff1,
                              double d0) {
  auto s0 = detail::encoder_forward(g, enc, same0);
  auto s1 = detail::encoder_forward(g, enc, same1);
  auto d0e = detail::encoder_forward(g, enc, diff0);
  auto d1e = detail::encoder_forward(g, enc, diff1);
  Node* kl_same = detail::kl_rows(g, s0.mu, s0.log_var, s1.mu, s1.log_var);
  Node* kl_diff = detail::kl_rows(g, d0e.mu, d0e.log_var, d1e.mu, d1e.log_var);
  return g.sub(g.mean(kl_same), g.mean(g.emin_scalar(kl_diff, d0)));
}

struct ContrastivePairs {
  Mat same0, same1, diff0, diff1;
  int count = 0;
};

inline ContrastivePairs sample_pairs(const VaeBatch& b, int n_pairs,
                                     rng::Stream& rs) {
  // trajectories with at least two rows, and at least two distinct ones
  std::map<int, std::vector<int>> rows_by_traj;
  for (std::size_t i = 0; i < b.traj_id.size(); ++i)
    rows_by_traj[b.traj_id[i]].push_back(static_cast<int>(i));
  std::vector<int> trajs;
  for (auto& [id, rows] : rows_by_traj)
    if (rows.size() >= 2) trajs.push_back(id);
  if (rows_by_traj.size() < 2 || trajs.empty())
    throw std::invalid_argument(
        "contrastive pairs: need transitions from at least two trajectories");
  std::vector<int> all_trajs;
  for (auto& [id, rows] : rows_by_traj) all_trajs.push_back(id);

  ContrastivePairs p;
  p.count = n_pairs;
  int w = static_cast<int>(b.x_enc.cols());
  p.same0.resize(n_pairs, w);
  p.same1.resize(n_pairs, w);
  p.diff0.resize(n_pairs, w);
  p.diff1.resize(n_pairs, w);
  for (int i = 0; i < n_pairs; ++i) {
    const auto& rows = rows_by_traj[trajs[rs.uniform_int((int)trajs.size())]];
    int a = rs.uniform_int((int)rows.size());
    int bidx = rs.uniform_int((int)rows.size() - 1);
    if (bidx >= a) ++bidx;
    p.same0.row(i) = b.x_enc.row(rows[a]);
    p.same1.row(i) = b.x_enc.row(rows[bidx]);
    int t0 = rs.uniform_int((int)all_trajs.size());
    int t1 = rs.uniform_int((int)all_trajs.size() - 1);
    if (t1 >= t0) ++t1;
    const auto& r0 = rows_by_traj[all_trajs[t0]];
    const auto& r1 = rows_by_traj[all_trajs[t1]];
    p.diff0.row(i) = b.x_enc.row(r0[rs.uniform_int((int)r0.size())]);
    p.diff1.row(i) = b.x_enc.row(r1[rs.uniform_int((int)r1.size())]);
  }
  return p;
}

struct VaeDiag {
  double elbo = 0.0;
  double contrastive = 0.0;
  bool skipped = false;
};

// One joint Adam step on -ELBO + lambda * contrastive for encoder and
// decoder parameters. With lambda = 0 no contrastive pairs are drawn.
inline VaeDiag vae_update(Encoder& enc, Decoder& dec, const VaeBatch& b,
                          const VaeConfig& cfg, rng::Stream& rs) {
  Mat eps(b.x_enc.rows(), enc.latent_dim);
  for (int i = 0; i < eps.rows(); ++i)
    for (int j = 0; j < eps.cols(); ++j) eps(i, j) = rs.normal();
  Graph g;
  Node* el = elbo_node(g, enc, dec, b.x_enc, b.x_sa, b.s_next_norm, eps,
                       cfg.recon_var);
  Node* loss = g.neg(el);
  VaeDiag diag;
  diag.elbo = el->value(0, 0);
  if (cfg.lambda_contrastive > 0.0) {
    ContrastivePairs pairs = sample_pairs(b, cfg.pairs, rs);
    Node* contr = contrastive_node(g, enc, pairs.same0, pairs.same1, pairs.diff0,
                                   pairs.diff1, cfg.d0);
    diag.contrastive = contr->value(0, 0);
    loss = g.add(loss, g.scale(contr, cfg.lambda_contrastive));
  }
  if (!std::isfinite(loss->value(0, 0))) {
    diag.skipped = true;
    return diag;
  }
  GradMap grads = g.backward(loss);
  GradMap ge, gd;
  for (auto& [name, grad] : grads) {
    if (enc.net.has(name)) ge[name] = grad;
    else if (dec.net.has(name)) gd[name] = grad;
  }
  adam_step(enc.net, ge, enc.adam);
  adam_step(dec.net, gd, dec.adam);
  return diag;
}

inline PredictorPair make_predictor(const Encoder& enc) {
  return {[&enc](const Vec& s, const Vec& a, const Vec& sn) {
            return enc.encode(s, a, sn).first;
          },
          [&enc](const Vec& s0) { return enc.encode_row(enc.prime_row(s0)).first; },
          enc.latent_dim};
}

}  // namespace adail
