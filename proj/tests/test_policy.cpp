#include <catch2/catch_amalgamated.hpp>

#include "adail/policy.hpp"

using namespace adail;

namespace {

Policy zero_cartpole_policy() {
  rng::Stream rs(1);
  Policy p = Policy::make(EnvFamily::get("cartpole"), ContextMode::none, 0,
                          {8, 8}, rs);
  for (auto& e : p.net.entries) e.second.setZero();
  return p;
}

RolloutBatch tiny_batch(const Policy& policy, int n, std::uint64_t seed) {
  rng::Stream rs(seed);
  RolloutBatch b;
  b.obs.resize(n, policy.obs_dim);
  b.ctx.resize(n, 0);
  b.actions.resize(n, policy.act_dim);
  b.logp.resize(n);
  b.reward.resize(n);
  b.r_true = Vec::Zero(n);
  b.value = Vec::Zero(n);
  b.done.assign(n, 0);
  b.episode_start = {0};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < policy.obs_dim; ++j) b.obs(i, j) = rs.uniform(-0.1, 0.1);
    int a = rs.uniform_int(2);
    b.actions(i, 0) = a;
    b.logp(i) = policy.logp_of(b.obs.row(i).transpose(), Vec(0),
                               Vec::Constant(1, a));
    b.reward(i) = rs.uniform(0.0, 1.0);
  }
  b.done[n - 1] = 1;
  return b;
}

}  // namespace

TEST_CASE("categorical act with uniform logits") {
  Policy p = zero_cartpole_policy();
  rng::Stream rs(9);
  int counts[2] = {0, 0};
  for (int i = 0; i < 4000; ++i) {
    ActResult r = p.act(Vec::Zero(4), Vec(0), rs);
    counts[static_cast<int>(r.action(0))]++;
    CHECK(r.logp == Catch::Approx(std::log(0.5)).epsilon(1e-12));
  }
  CHECK(std::abs(counts[0] - counts[1]) < 300);
}

TEST_CASE("same seed gives identical actions") {
  rng::Stream init(3);
  Policy p = Policy::make(EnvFamily::get("puck"), ContextMode::true_params, 2,
                          {16, 16}, init);
  Vec obs = Vec::Ones(4), ctx = Vec::Constant(2, 0.5);
  rng::Stream a(123), b(123);
  ActResult ra = p.act(obs, ctx, a);
  ActResult rb = p.act(obs, ctx, b);
  CHECK(ra.action.cwiseEqual(rb.action).all());
  CHECK(ra.logp == rb.logp);
}

TEST_CASE("gaussian deterministic action is the mean and logp is exact") {
  rng::Stream init(5);
  Policy p = Policy::make(EnvFamily::get("puck"), ContextMode::none, 0, {8, 8},
                          init);
  Vec obs(4);
  obs << 0.3, -0.2, 0.5, 0.1;
  rng::Stream rs(1);
  ActResult det = p.act(obs, Vec(0), rs, true);
  RowVec mean = mlp_apply(p.net, "pi.", Mat(obs.transpose()));
  CHECK((det.action.transpose() - mean).cwiseAbs().maxCoeff() == 0.0);

  ActResult sampled = p.act(obs, Vec(0), rs, false);
  CHECK(p.logp_of(obs, Vec(0), sampled.action) == sampled.logp);
}

TEST_CASE("context width is validated") {
  rng::Stream init(7);
  Policy p = Policy::make(EnvFamily::get("cartpole"), ContextMode::true_params, 1,
                          {8, 8}, init);
  rng::Stream rs(1);
  CHECK_THROWS_AS(p.act(Vec::Zero(4), Vec::Zero(2), rs), std::invalid_argument);
  CHECK_THROWS_AS(p.act(Vec::Zero(4), Vec(0), rs), std::invalid_argument);
  CHECK_NOTHROW(p.act(Vec::Zero(4), Vec::Zero(1), rs));
}

TEST_CASE("gae limits and hand-computed returns") {
  Policy p = zero_cartpole_policy();
  SECTION("lambda 0 is one-step TD") {
    RolloutBatch b = tiny_batch(p, 5, 11);
    b.value << 0.5, -0.2, 0.3, 0.1, 0.4;
    compute_gae(b, 0.99, 0.0);
    for (int t = 0; t < 5; ++t) {
      double next_v = t < 4 ? b.value(t + 1) : 0.0;
      CHECK(b.adv(t) ==
            Catch::Approx(b.reward(t) + 0.99 * next_v - b.value(t)).epsilon(1e-12));
    }
  }
  SECTION("lambda 1 with zero values is the discounted return-to-go") {
    RolloutBatch b = tiny_batch(p, 6, 13);
    b.value.setZero();
    compute_gae(b, 0.99, 1.0);
    for (int t = 0; t < 6; ++t) {
      double rtg = 0.0;
      for (int u = 5; u >= t; --u) rtg = b.reward(u) + 0.99 * rtg;
      CHECK(b.adv(t) == Catch::Approx(rtg).epsilon(1e-12));
      CHECK(b.ret(t) == Catch::Approx(rtg).epsilon(1e-12));
    }
  }
  SECTION("three unit rewards") {
    RolloutBatch b = tiny_batch(p, 3, 17);
    b.reward << 1.0, 1.0, 1.0;
    b.value.setZero();
    compute_gae(b, 0.99, 1.0);
    CHECK(b.ret(0) == Catch::Approx(2.9701).epsilon(1e-12));
    CHECK(b.ret(1) == Catch::Approx(1.99).epsilon(1e-12));
    CHECK(b.ret(2) == Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("episode boundaries cut the recursion") {
    RolloutBatch b = tiny_batch(p, 6, 19);
    b.episode_start = {0, 3};
    b.done[2] = 1;
    b.done[5] = 1;
    b.value.setZero();
    b.reward.setOnes();
    compute_gae(b, 0.99, 1.0);
    CHECK(b.adv(0) == Catch::Approx(1.0 + 0.99 * (1.0 + 0.99)).epsilon(1e-12));
    CHECK(b.adv(3) == b.adv(0));
  }
}

TEST_CASE("advantage normalization") {
  Policy p = zero_cartpole_policy();
  RolloutBatch b = tiny_batch(p, 64, 23);
  b.value.setZero();
  compute_gae(b, 0.99, 0.95);
  normalize_advantages(b);
  CHECK(std::abs(b.adv.mean()) < 1e-10);
  double var = (b.adv.array() - b.adv.mean()).square().sum() / b.adv.size();
  CHECK(std::sqrt(var) == Catch::Approx(1.0).epsilon(1e-6));

  // an all-zero advantage batch stays zero
  RolloutBatch z = tiny_batch(p, 8, 29);
  z.adv = Vec::Zero(8);
  z.ret = Vec::Zero(8);
  normalize_advantages(z);
  CHECK(z.adv.isZero());
}

TEST_CASE("ppo first-minibatch ratios are exactly one") {
  rng::Stream init(31);
  Policy p = Policy::make(EnvFamily::get("cartpole"), ContextMode::none, 0,
                          {8, 8}, init);
  ValueFn v = ValueFn::make(4, {8, 8}, init);
  RolloutBatch b = tiny_batch(p, 48, 37);
  compute_gae(b, 0.99, 0.95);
  normalize_advantages(b);
  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 64;  // single minibatch covers the whole batch
  AdamState api, avf;
  api.lr = avf.lr = 1e-3;
  rng::Stream rs(41);
  PpoDiag diag = ppo_update(p, v, b, cfg, rs, api, avf);
  CHECK(diag.approx_kl == 0.0);
  CHECK(diag.clip_frac == 0.0);
  CHECK(diag.epochs_used == 1);
}

TEST_CASE("uniform categorical entropy is ln 2") {
  Policy p = zero_cartpole_policy();
  ValueFn v = [] {
    rng::Stream rs(2);
    return ValueFn::make(4, {8, 8}, rs);
  }();
  RolloutBatch b = tiny_batch(p, 32, 43);
  compute_gae(b, 0.99, 0.95);
  normalize_advantages(b);
  PpoConfig cfg;
  cfg.epochs = 1;
  AdamState api, avf;
  rng::Stream rs(47);
  PpoDiag diag = ppo_update(p, v, b, cfg, rs, api, avf);
  CHECK(diag.entropy == Catch::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("zero advantages leave the policy distribution unchanged") {
  rng::Stream init(53);
  Policy p = Policy::make(EnvFamily::get("cartpole"), ContextMode::none, 0,
                          {8, 8}, init);
  ValueFn v = ValueFn::make(4, {8, 8}, init);
  Policy before = p;
  RolloutBatch b = tiny_batch(p, 64, 59);
  b.value = Vec::Zero(64);
  compute_gae(b, 0.99, 0.95);
  b.adv.setZero();
  b.ret.setZero();
  PpoConfig cfg;
  cfg.ent_coef = 0.0;
  cfg.epochs = 3;
  AdamState api, avf;
  api.lr = avf.lr = 1e-2;
  rng::Stream rs(61);
  ppo_update(p, v, b, cfg, rs, api, avf);
  for (std::size_t i = 0; i < p.net.entries.size(); ++i)
    CHECK(p.net.entries[i].second.cwiseEqual(before.net.entries[i].second).all());
}

TEST_CASE("non-finite loss skips the minibatch and keeps parameters") {
  rng::Stream init(67);
  Policy p = Policy::make(EnvFamily::get("cartpole"), ContextMode::none, 0,
                          {8, 8}, init);
  ValueFn v = ValueFn::make(4, {8, 8}, init);
  Policy before = p;
  RolloutBatch b = tiny_batch(p, 16, 71);
  compute_gae(b, 0.99, 0.95);
  b.adv = Vec::Constant(16, std::numeric_limits<double>::quiet_NaN());
  PpoConfig cfg;
  cfg.epochs = 1;
  AdamState api, avf;
  rng::Stream rs(73);
  PpoDiag diag = ppo_update(p, v, b, cfg, rs, api, avf);
  CHECK(diag.skipped_minibatches == 1);
  for (std::size_t i = 0; i < p.net.entries.size(); ++i)
    CHECK(p.net.entries[i].second.cwiseEqual(before.net.entries[i].second).all());
}
