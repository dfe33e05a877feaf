#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "adail/discriminator.hpp"
#include "adail/net.hpp"
#include "adail/policy.hpp"
#include "adail/posterior.hpp"
#include "adail/vae.hpp"

namespace adail {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / (std::max(std::abs(a), std::abs(b)) + 1e-7);
}

struct FdReport {
  double max_err = 0.0;
  long long checks = 0;
};

// Central finite differences over every coordinate of every entry of the
// net, compared against an analytic gradient map.
inline FdReport fd_check(const ParamNet& net,
                         const std::function<double(const ParamNet&)>& eval,
                         const GradMap& analytic, double h = 1e-4) {
  FdReport rep;
  ParamNet probe = net;
  for (auto& [name, p] : probe.entries) {
    auto it = analytic.find(name);
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < p.cols(); ++j) {
        double keep = p(i, j);
        p(i, j) = keep + h;
        double up = eval(probe);
        p(i, j) = keep - h;
        double down = eval(probe);
        p(i, j) = keep;
        double fd = (up - down) / (2.0 * h);
        double an = it == analytic.end() ? 0.0 : it->second(i, j);
        rep.max_err = std::max(rep.max_err, rel_err(an, fd));
        ++rep.checks;
      }
  }
  return rep;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace checks {

inline Mat random_mat(int r, int c, rng::Stream& rs, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rs.uniform(-scale, scale);
  return m;
}

// every differentiable op family, randomized small instances
inline CheckResult gradient_suite(std::uint64_t seed, int trials_per_family = 20,
                                  double tol = 1e-4) {
  double worst = 0.0;
  long long total = 0;
  std::string worst_family;
  auto run = [&](const std::string& family, const ParamNet& net,
                 const std::function<Node*(Graph&, const ParamNet&)>& build) {
    Graph g;
    ParamNet probe = net;
    Node* loss = build(g, probe);
    GradMap an = g.backward(loss);
    auto eval = [&build](const ParamNet& n) {
      Graph gg;
      return build(gg, n)->value(0, 0);
    };
    FdReport rep = fd_check(probe, eval, an);
    total += rep.checks;
    if (rep.max_err > worst) {
      worst = rep.max_err;
      worst_family = family;
    }
  };

  for (int trial = 0; trial < trials_per_family; ++trial) {
    rng::Stream rs(rng::derive(seed, "gradcheck", trial));
    int in = 2 + rs.uniform_int(3);
    int hid = 2 + rs.uniform_int(4);
    int out = 1 + rs.uniform_int(3);
    int batch = 1 + rs.uniform_int(4);

    {  // tanh MLP with mean-square readout
      ParamNet net;
      init_mlp(net, "f.", {in, hid, out}, rs);
      Mat x = random_mat(batch, in, rs);
      run("mlp", net, [x](Graph& g, const ParamNet& n) {
        return g.mean(g.square(mlp_forward(g, n, "f.", g.constant(x))));
      });
    }
    {  // sigmoid cross entropy
      ParamNet net;
      init_mlp(net, "f.", {in, hid, 1}, rs);
      Mat x = random_mat(batch, in, rs);
      Mat y(batch, 1);
      for (int i = 0; i < batch; ++i) y(i, 0) = rs.uniform() < 0.5 ? 0.0 : 1.0;
      run("sigmoid_ce", net, [x, y](Graph& g, const ParamNet& n) {
        return g.mean(g.bce_with_logits(mlp_forward(g, n, "f.", g.constant(x)), y));
      });
    }
    {  // Gaussian log density with learnable log std
      ParamNet net;
      init_mlp(net, "f.", {in, hid, out}, rs);
      net.add("log_std", random_mat(1, out, rs, 0.3));
      Mat x = random_mat(batch, in, rs);
      Mat a = random_mat(batch, out, rs, 2.0);
      run("gaussian_logp", net, [x, a](Graph& g, const ParamNet& n) {
        Node* mean = mlp_forward(g, n, "f.", g.constant(x));
        Node* ls = g.leaf("log_std", n.at("log_std"));
        return g.mean(gaussian_logp_node(g, mean, ls, a));
      });
    }
    {  // categorical log likelihood via log-softmax
      ParamNet net;
      int n_actions = 2 + rs.uniform_int(3);
      init_mlp(net, "f.", {in, hid, n_actions}, rs);
      Mat x = random_mat(batch, in, rs);
      std::vector<int> idx(batch);
      for (int i = 0; i < batch; ++i) idx[i] = rs.uniform_int(n_actions);
      run("categorical_logp", net, [x, idx](Graph& g, const ParamNet& n) {
        Node* logits = mlp_forward(g, n, "f.", g.constant(x));
        return g.mean(g.gather_cols(g.log_softmax(logits), idx));
      });
    }
    {  // Huber regression with residuals straddling the joint
      ParamNet net;
      init_mlp(net, "f.", {in, hid, out}, rs);
      Mat x = random_mat(batch, in, rs, 2.0);
      Mat c = random_mat(batch, out, rs, 2.0);
      run("huber", net, [x, c](Graph& g, const ParamNet& n) {
        Node* pred = mlp_forward(g, n, "f.", g.constant(x));
        Node* resid = g.sub(pred, g.constant(c));
        return g.mean(g.row_sum(g.huber(resid, 1.0)));
      });
    }
    {  // KL between encoder posteriors of two inputs (both min branches)
      ParamNet net;
      int d = 1 + rs.uniform_int(2);
      init_mlp(net, "e.", {in, hid, 2 * d}, rs);
      Mat x0 = random_mat(2, in, rs);
      Mat x1 = random_mat(2, in, rs);
      double d0 = trial % 2 == 0 ? 10.0 : 1e-3;
      run("kl_pair", net, [x0, x1, d, d0](Graph& g, const ParamNet& n) {
        auto fwd = [&](const Mat& x) {
          Node* out = mlp_forward(g, n, "e.", g.constant(x));
          return std::pair<Node*, Node*>{
              g.slice_cols(out, 0, d),
              g.clip(g.slice_cols(out, d, d), kLogVarMin, kLogVarMax)};
        };
        auto [mu0, lv0] = fwd(x0);
        auto [mu1, lv1] = fwd(x1);
        Node* kl = detail::kl_rows(g, mu0, lv0, mu1, lv1);
        return g.mean(g.emin_scalar(kl, d0));
      });
    }
    {  // ELBO with common random numbers
      int d = 1 + rs.uniform_int(2);
      ParamNet net;
      init_mlp(net, "enc.", {in, hid, 2 * d}, rs);
      init_mlp(net, "dec.", {in + d, hid, in}, rs);
      Mat x_enc = random_mat(batch, in, rs);
      Mat x_sa = random_mat(batch, in, rs);
      Mat s_next = random_mat(batch, in, rs);
      Mat eps = random_mat(batch, d, rs);
      run("elbo", net, [=](Graph& g, const ParamNet& n) {
        constexpr double kLog2Pi = 1.8378770664093454835606594728112;
        Node* out = mlp_forward(g, n, "enc.", g.constant(x_enc));
        Node* mu = g.slice_cols(out, 0, d);
        Node* lv = g.clip(g.slice_cols(out, d, d), kLogVarMin, kLogVarMax);
        Node* c = g.add(mu, g.mul(g.exp_(g.scale(lv, 0.5)), g.constant(eps)));
        Node* pred = mlp_forward(g, n, "dec.", g.concat_cols(g.constant(x_sa), c));
        Node* se = g.row_sum(g.square(g.sub(pred, g.constant(s_next))));
        Node* recon =
            g.add_scalar(g.scale(se, -0.5), -0.5 * kLog2Pi * s_next.cols());
        Node* kl = detail::kl_to_prior_rows(g, mu, lv);
        return g.mean(g.sub(recon, kl));
      });
    }
    {  // clipped-surrogate composition away from the kinks
      ParamNet net;
      init_mlp(net, "f.", {in, hid, 1}, rs);
      for (auto& e : net.entries) e.second *= 0.05;  // keep ratios off the clip edge
      Mat x = random_mat(batch, in, rs);
      Mat adv = random_mat(batch, 1, rs, 2.0);
      run("clip_min", net, [x, adv](Graph& g, const ParamNet& n) {
        Node* logit = mlp_forward(g, n, "f.", g.constant(x));
        Node* ratio = g.exp_(logit);
        Node* a = g.constant(adv);
        Node* surr =
            g.emin(g.mul(ratio, a), g.mul(g.clip(ratio, 0.8, 1.2), a));
        return g.neg(g.mean(surr));
      });
    }
  }
  std::ostringstream os;
  os << total << " coordinate checks, max relative error " << worst << " ("
     << worst_family << ")";
  return {"gradient finite differences", worst < tol, os.str()};
}

// forward identity and exact -lambda gradient scaling, lambda in {0, 1/2, 1}
inline CheckResult grl_suite(std::uint64_t seed) {
  rng::Stream rs(rng::derive(seed, "grlcheck"));
  double worst = 0.0;

  {  // forward identity and plain gradient reversal on a leaf
    Graph g;
    Mat v(1, 2);
    v << 1.0, -2.0;
    Node* x = g.leaf("x", v);
    Node* y = g.grl(x, 1.0);
    if (!y->value.cwiseEqual(v).all())
      return {"gradient reversal algebra", false, "forward not identity"};
    Mat up(1, 2);
    up << 3.0, -1.0;
    GradMap gm = g.backward(g.sum(g.mul(y, g.constant(up))));
    Mat want(1, 2);
    want << -3.0, 1.0;
    worst = std::max(worst, (gm["x"] - want).cwiseAbs().maxCoeff());
  }
  {  // composing two reversals with lambda = 1 restores the gradient
    Graph g;
    Mat v = checks::random_mat(2, 3, rs);
    Node* x = g.leaf("x", v);
    Node* y = g.grl(g.grl(x, 1.0), 1.0);
    GradMap gm = g.backward(g.sum(g.square(y)));
    Graph g2;
    Node* x2 = g2.leaf("x", v);
    GradMap gm2 = g2.backward(g2.sum(g2.square(x2)));
    worst = std::max(worst, (gm["x"] - gm2["x"]).cwiseAbs().maxCoeff());
  }
  // regression-head update: trunk gradients equal -lambda times the
  // gradients of the same update with the reversal removed
  const EnvFamily& fam = EnvFamily::get("puck");
  for (double lambda : {0.0, 0.5, 1.0}) {
    rng::Stream ds(rng::derive(seed, "grlcheck-disc", static_cast<std::uint64_t>(lambda * 2)));
    Discriminator d =
        Discriminator::make(fam, Normalizer::identity(fam.obs_dim), {32, 32},
                            lambda, 0.0, 10.0, false, 1e-3, ds);
    Mat x = checks::random_mat(16, d.input_width(), ds);
    Mat c = checks::random_mat(16, fam.param_count(), ds);
    GradMap with = d.reg_grads(x, c, true);
    GradMap without = d.reg_grads(x, c, false);
    for (auto& [name, gw] : with) {
      if (name.rfind("trunk.", 0) == 0) {
        Mat expect = -lambda * without[name];
        worst = std::max(worst, (gw - expect).cwiseAbs().maxCoeff());
      } else {  // the head itself sees unreversed gradients
        worst = std::max(worst, (gw - without[name]).cwiseAbs().maxCoeff());
      }
    }
  }
  std::ostringstream os;
  os << "max deviation " << worst;
  return {"gradient reversal algebra", worst < 1e-10, os.str()};
}

// closed-form loss and reward values
inline CheckResult analytic_suite() {
  double worst = 0.0;
  auto expect = [&worst](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
  };
  expect(huber_loss(Mat::Zero(1, 1), Mat::Constant(1, 1, 0.5), 1.0), 0.125);
  expect(huber_loss(Mat::Zero(1, 1), Mat::Constant(1, 1, 2.0), 1.0), 1.5);
  expect(huber_loss(Mat::Zero(1, 1), Mat::Constant(1, 1, 1.0), 1.0), 0.5);
  Vec z1 = Vec::Zero(1), o1 = Vec::Ones(1);
  expect(kl_diag_gaussians(z1, o1, z1, o1), 0.0);
  expect(kl_diag_gaussians(z1, o1, o1, o1), 0.5);
  expect(kl_diag_gaussians(z1, 4.0 * o1, z1, o1),
         0.5 * (4.0 - 1.0 - std::log(4.0)));
  expect(imitation_reward_from_p(0.5), std::log(2.0));
  expect(imitation_reward_from_p(0.0), 0.0);
  expect(imitation_reward_from_p(1.0 - 1e-12), 10.0);
  {  // balanced batches through a zero-weight discriminator: loss = ln 2
    Graph g;
    Node* logits = g.leaf("z", Mat::Zero(8, 1));
    Mat labels(8, 1);
    for (int i = 0; i < 8; ++i) labels(i, 0) = i < 4 ? 0.0 : 1.0;
    expect(g.mean(g.bce_with_logits(logits, labels))->value(0, 0), std::log(2.0));
  }
  std::ostringstream os;
  os << "max deviation " << worst;
  return {"analytic loss values", worst < 1e-9, os.str()};
}

inline CheckResult lemma1_suite() {
  std::vector<double> residuals{-2.5, -1.2, -0.8, -0.3, 0.2, 0.7, 1.5, 3.0};
  Lemma1Report rep = lemma1_gradient_check(1.0, residuals);
  std::ostringstream os;
  os << "inside C in [" << rep.inside_c_min << ", " << rep.inside_c_max
     << "], outside C in [" << rep.outside_c_min << ", " << rep.outside_c_max
     << "], equality errors " << rep.inside_equal_err << " / "
     << rep.outside_equal_err;
  bool pass = rep.inside_ok && rep.outside_ok && rep.inside_equal_err < 1e-10 &&
              rep.outside_equal_err < 1e-10;
  return {"huber gradient proportionality", pass, os.str()};
}

inline CheckResult adam_suite(std::uint64_t seed) {
  rng::Stream rs(rng::derive(seed, "adamcheck"));
  double worst = 0.0;
  {  // zero gradient leaves parameters unchanged
    ParamNet net;
    init_mlp(net, "f.", {3, 4, 2}, rs);
    ParamNet before = net;
    AdamState st;
    GradMap gm;
    for (auto& [name, p] : net.entries) gm[name] = Mat::Zero(p.rows(), p.cols());
    adam_step(net, gm, st);
    for (std::size_t i = 0; i < net.entries.size(); ++i)
      worst = std::max(worst, (net.entries[i].second - before.entries[i].second)
                                  .cwiseAbs()
                                  .maxCoeff());
    if (st.step_count != 1) worst = 1.0;
  }
  {  // one hand-computed step: w = 0, g = 1, lr = 0.1 -> w close to -0.1
    ParamNet net;
    net.add("w", Mat::Zero(1, 1));
    net.specs.push_back({"", {1, 1}});
    AdamState st;
    st.lr = 0.1;
    GradMap gm;
    gm["w"] = Mat::Ones(1, 1);
    adam_step(net, gm, st);
    worst = std::max(worst, std::abs(net.at("w")(0, 0) + 0.1 / (1.0 + 1e-8)));
  }
  std::ostringstream os;
  os << "max deviation " << worst;
  return {"adam update contract", worst < 1e-12, os.str()};
}

// The internal invariant suite behind the `check` verb.
inline std::vector<CheckResult> run_internal_checks(std::uint64_t seed = 0,
                                                    int gradient_trials = 20) {
  std::vector<CheckResult> out;
  out.push_back(checks::gradient_suite(seed, gradient_trials));
  out.push_back(checks::grl_suite(seed));
  out.push_back(checks::analytic_suite());
  out.push_back(checks::lemma1_suite());
  out.push_back(checks::adam_suite(seed));
  return out;
}

}  // namespace checks

}  // namespace adail
