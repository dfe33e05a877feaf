#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "adail/config.hpp"
#include "adail/discriminator.hpp"
#include "adail/policy.hpp"
#include "adail/posterior.hpp"
#include "adail/vae.hpp"

namespace adail {

// ---------------------------------------------------------------------------
// Reference controller for the puck family: proportional-derivative pull
// toward the origin. Used as the independent yardstick for expert quality.

inline double puck_reference_return(const EnvFamily& fam, const DynParams& c,
                                    std::uint64_t seed, int episodes = 100) {
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Env env = generate_env(fam, c, true);
    rng::Stream rs(rng::derive(seed, "puck-ref", ep));
    Vec s = env.reset(rs);
    double ret = 0.0;
    while (!env.done()) {
      Vec a(2);
      a(0) = -3.0 * s(0) - 2.5 * s(2) - c.values(0);
      a(1) = -3.0 * s(1) - 2.5 * s(3);
      StepOut out = env.step(a.cwiseMax(-10.0).cwiseMin(10.0));
      ret += out.r_true;
      s = out.s_next;
    }
    total += ret;
  }
  return total / episodes;
}

// ---------------------------------------------------------------------------

struct AlgoFlags {
  bool imitation = false;
  bool sample_prior = false;
  ContextMode train_ctx = ContextMode::none;
  ContextMode eval_ctx = ContextMode::none;
  bool train_posterior = false;
  bool vae = false;
  int context_dim = 0;
};

inline AlgoFlags algo_flags(const RunConfig& cfg, const EnvFamily& fam) {
  AlgoFlags f;
  const std::string& a = cfg.algorithm;
  int k = fam.param_count();
  if (a == "expert") {
    f = {false, false, ContextMode::none, ContextMode::none, false, false, 0};
  } else if (a == "up_true") {
    f = {false, true, ContextMode::true_params, ContextMode::true_params,
         false, false, k};
  } else if (a == "gail") {
    f = {true, false, ContextMode::none, ContextMode::none, false, false, 0};
  } else if (a == "gail_rand") {
    f = {true, true, ContextMode::none, ContextMode::none, false, false, 0};
  } else if (a == "adail_true") {
    f = {true, true, ContextMode::true_params, ContextMode::true_params,
         true, false, k};
  } else if (a == "adail_pred") {
    ContextMode train = cfg.posterior_train_context ? ContextMode::posterior
                                                    : ContextMode::true_params;
    f = {true, true, train, ContextMode::posterior, true, false, k};
  } else if (a == "adail_rand") {
    f = {true, true, ContextMode::random, ContextMode::random, true, false, k};
  } else if (a == "vae_adail") {
    f = {true, true, ContextMode::posterior, ContextMode::posterior,
         false, true, cfg.latent_dim};
  } else {
    throw ConfigError("unknown algorithm '" + a + "'");
  }
  if (cfg.policy_context != "auto") {
    f.train_ctx = context_mode_from(cfg.policy_context);
    f.eval_ctx = f.train_ctx;
    if (f.train_ctx == ContextMode::none) f.context_dim = 0;
  }
  if (cfg.posterior_enabled == "on") f.train_posterior = true;
  if (cfg.posterior_enabled == "off") f.train_posterior = false;
  return f;
}

// ---------------------------------------------------------------------------
// Rollout collection (whole episodes, at least min_steps in total)

struct RolloutOptions {
  int min_steps = 2048;
  ContextMode ctx_mode = ContextMode::none;
  int context_dim = 0;
  Vec true_ctx;                         // for ContextMode::true_params
  const PredictorPair* predictor = nullptr;  // for ContextMode::posterior
  double ema_beta = 0.9;
  bool use_true_reward = false;
  bool deterministic = false;
  bool poison = false;
};

inline RolloutBatch collect_rollout(const Policy& policy, const ValueFn& vf,
                                    const EnvFamily& fam, const DynParams& c,
                                    const RolloutOptions& opt,
                                    std::uint64_t stream_seed) {
  std::vector<Vec> obs_rows, ctx_rows, act_rows;
  std::vector<double> logps, rewards, r_trues;
  std::vector<char> dones;
  RolloutBatch batch;
  int total = 0;
  for (int ep = 0; total < opt.min_steps; ++ep) {
    rng::Stream rs(rng::derive(stream_seed, "episode", ep));
    Env env = generate_env(fam, c, true);
    env.poison_true_reward(opt.poison);
    Vec s = env.reset(rs);
    batch.episode_start.push_back(total);
    batch.episode_c.push_back(c);

    Vec ctx(opt.context_dim);
    OnlineEstimate est = OnlineEstimate::make(opt.context_dim, opt.ema_beta);
    switch (opt.ctx_mode) {
      case ContextMode::none:
        ctx = Vec(0);
        break;
      case ContextMode::true_params:
        ctx = opt.true_ctx;
        break;
      case ContextMode::random:
        for (int i = 0; i < opt.context_dim; ++i) ctx(i) = rs.uniform(-1.0, 1.0);
        break;
      case ContextMode::posterior:
        est.update(opt.predictor->prime(s));
        ctx = est.context();
        break;
    }

    while (!env.done()) {
      ActResult act = policy.act(s, ctx, rs, opt.deterministic);
      StepOut out = env.step(act.action);
      Transition tr;
      tr.s = s;
      tr.a = act.action;
      tr.s_next = out.s_next;
      tr.r_true = out.r_true;
      tr.done = out.done;
      tr.logp = act.logp;
      tr.c_true = c;
      batch.transitions.push_back(tr);
      obs_rows.push_back(s);
      ctx_rows.push_back(ctx);
      act_rows.push_back(act.action);
      logps.push_back(act.logp);
      r_trues.push_back(out.r_true);
      rewards.push_back(opt.use_true_reward ? out.r_true : 0.0);
      dones.push_back(out.done ? 1 : 0);
      ++total;
      s = out.s_next;
      if (opt.ctx_mode == ContextMode::posterior) {
        est.update(opt.predictor->step(tr.s, tr.a, tr.s_next));
        ctx = est.context();
      }
    }
  }
  int n = total;
  batch.obs.resize(n, policy.obs_dim);
  batch.ctx.resize(n, opt.context_dim);
  batch.actions.resize(n, policy.act_dim);
  batch.logp.resize(n);
  batch.reward.resize(n);
  batch.r_true.resize(n);
  batch.done = dones;
  for (int i = 0; i < n; ++i) {
    batch.obs.row(i) = obs_rows[i].transpose();
    if (opt.context_dim > 0) batch.ctx.row(i) = ctx_rows[i].transpose();
    batch.actions.row(i) = act_rows[i].transpose();
    batch.logp(i) = logps[i];
    batch.reward(i) = rewards[i];
    batch.r_true(i) = r_trues[i];
  }
  batch.value = vf.value_batch(batch.policy_input());
  return batch;
}

// Deterministic evaluation of mean episode return on one environment.
inline double eval_mean_return(const Policy& policy, const EnvFamily& fam,
                               const DynParams& c, int episodes,
                               std::uint64_t seed, ContextMode ctx_mode,
                               const PredictorPair* predictor = nullptr,
                               double ema_beta = 0.9) {
  double total = 0.0;
  Vec true_ctx = fam.normalize(c.values);
  for (int ep = 0; ep < episodes; ++ep) {
    rng::Stream rs(rng::derive(seed, "eval-ep", ep));
    Env env = generate_env(fam, c, true);
    Vec s = env.reset(rs);
    Vec ctx(0);
    OnlineEstimate est =
        OnlineEstimate::make(predictor ? predictor->dim : 0, ema_beta);
    if (ctx_mode == ContextMode::true_params) ctx = true_ctx;
    if (ctx_mode == ContextMode::random) {
      ctx = Vec(policy.context_dim);
      for (int i = 0; i < policy.context_dim; ++i) ctx(i) = rs.uniform(-1.0, 1.0);
    }
    if (ctx_mode == ContextMode::posterior) {
      est.update(predictor->prime(s));
      ctx = est.context();
    }
    double ret = 0.0;
    while (!env.done()) {
      ActResult act = policy.act(s, ctx, rs, true);
      StepOut out = env.step(act.action);
      ret += out.r_true;
      if (ctx_mode == ContextMode::posterior) {
        est.update(predictor->step(s, act.action, out.s_next));
        ctx = est.context();
      }
      s = out.s_next;
    }
    total += ret;
  }
  return total / episodes;
}

// ---------------------------------------------------------------------------
// Run directory artifacts

namespace fsd = std::filesystem;

struct MetricsFile {
  std::ofstream os;
  explicit MetricsFile(const std::string& path) {
    os.open(path);
    if (!os) throw std::runtime_error("cannot write metrics file " + path);
    os << "iter,c0,c1,episodes,steps,mean_return,eval_return,disc_loss,disc_acc,"
          "reg_mse,post_loss,elbo,contrastive,pi_loss,v_loss,entropy,approx_kl,"
          "clip_frac,epochs_used\n";
    os.flush();
  }
  void row(const std::vector<double>& vals) {
    for (std::size_t i = 0; i < vals.size(); ++i)
      os << (i ? "," : "") << fmt_g17(vals[i]);
    os << "\n";
    os.flush();
  }
};

struct TrainResult {
  RunConfig cfg;
  EnvFamily family;  // effective family (range overrides applied)
  Policy policy;
  ValueFn value;
  Normalizer obs_stats;  // running observation statistics (expert runs)
  std::optional<Discriminator> disc;
  std::optional<Posterior> posterior;
  std::optional<Encoder> encoder;
  std::optional<Decoder> decoder;
  std::string run_dir;
  bool expert_bar_met = true;
  double expert_bar = 0.0;
  double final_eval_return = 0.0;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

inline std::vector<std::pair<std::string, Mat>> norm_aux(const Normalizer& n) {
  return {{"norm.obs_mean", Mat(n.mean.transpose())},
          {"norm.obs_std", Mat(n.std.transpose())}};
}

inline std::string policy_meta(const Policy& p) {
  std::ostringstream os;
  os << "family = " << p.family_id << "\n"
     << "head = " << (p.categorical ? "categorical" : "gaussian") << "\n"
     << "context_mode = " << to_string(p.context_mode) << "\n"
     << "context_dim = " << p.context_dim << "\n"
     << "obs_dim = " << p.obs_dim << "\n"
     << "act_dim = " << p.act_dim << "\n";
  return os.str();
}

inline void save_final(const TrainResult& r) {
  if (r.run_dir.empty()) return;
  fsd::create_directories(fsd::path(r.run_dir) / "final");
  std::string base = (fsd::path(r.run_dir) / "final").string() + "/";
  save_paramnet(base + "policy.ck", r.policy.net, norm_aux(r.obs_stats));
  write_text(base + "policy.meta", policy_meta(r.policy));
  save_paramnet(base + "value.ck", r.value.net);
  if (r.disc) save_paramnet(base + "disc.ck", r.disc->net, norm_aux(r.disc->obs_norm));
  if (r.posterior)
    save_paramnet(base + "posterior.ck", r.posterior->net,
                  norm_aux(r.posterior->obs_norm));
  if (r.encoder)
    save_paramnet(base + "encoder.ck", r.encoder->net, norm_aux(r.encoder->obs_norm));
  if (r.decoder) save_paramnet(base + "decoder.ck", r.decoder->net);
}

inline void save_checkpoint_iter(const TrainResult& r, int iter) {
  if (r.run_dir.empty()) return;
  fsd::create_directories(fsd::path(r.run_dir) / "checkpoints");
  char name[64];
  std::snprintf(name, sizeof(name), "iter_%06d", iter);
  std::string base =
      (fsd::path(r.run_dir) / "checkpoints").string() + "/" + name;
  save_paramnet(base + ".policy.ck", r.policy.net, norm_aux(r.obs_stats));
  if (r.posterior)
    save_paramnet(base + ".posterior.ck", r.posterior->net,
                  norm_aux(r.posterior->obs_norm));
}

inline std::unique_ptr<MetricsFile> open_run_dir(const RunConfig& cfg,
                                                 const std::string& demo_src) {
  if (cfg.out.empty()) return nullptr;
  fsd::create_directories(cfg.out);
  write_text((fsd::path(cfg.out) / "config.snapshot").string(),
             config_snapshot(cfg));
  if (!demo_src.empty()) {
    std::ifstream in(demo_src, std::ios::binary);
    std::ofstream out(fsd::path(cfg.out) / "demos.ndjson", std::ios::binary);
    out << in.rdbuf();
  }
  return std::make_unique<MetricsFile>(
      (fsd::path(cfg.out) / "metrics.csv").string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reinforcement-learning loop (expert and UP-true): PPO on the true reward.

inline TrainResult rl_train(const RunConfig& cfg) {
  validate_config(cfg);
  TrainResult res;
  res.cfg = cfg;
  res.family = cfg.effective_family();
  const EnvFamily& fam = res.family;
  AlgoFlags flags = algo_flags(cfg, fam);

  rng::Stream init_rs(rng::derive(cfg.seed, "policy-init"));
  res.policy = Policy::make(fam, flags.train_ctx, flags.context_dim,
                            cfg.policy_hidden, init_rs);
  res.value = ValueFn::make(res.policy.input_width(), cfg.policy_hidden, init_rs);
  AdamState adam_pi, adam_vf;
  adam_pi.lr = cfg.policy_lr;
  adam_vf.lr = cfg.value_lr;

  double bar = cfg.expert_bar;
  if (cfg.algorithm == "expert" && bar == 0.0 && fam.family_id == "puck") {
    double ref = puck_reference_return(fam, fam.source_params(),
                                       rng::derive(cfg.seed, "ref-bar"));
    bar = ref + 0.1 * std::abs(ref);  // within 10 percent of the controller
  }
  res.expert_bar = bar;

  res.run_dir = cfg.out;
  auto metrics = detail::open_run_dir(cfg, "");
  RunningStat obs_stat;
  PpoConfig ppo{cfg.clip, cfg.vf_coef, cfg.ent_coef,
                cfg.epochs, cfg.minibatch, cfg.target_kl};

  std::optional<BlackoutMask> mask;
  if (cfg.blackout_size > 0) {
    GridSpec grid = fam.default_grid(cfg.eval_cells);
    mask = blackout_region(grid, cfg.blackout_size, fam.source_cell(grid));
  }

  res.expert_bar_met = cfg.algorithm != "expert";
  double eval_ret = 0.0;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    rng::Stream env_rs(rng::derive(cfg.seed, "envsample", iter));
    DynParams c = flags.sample_prior
                      ? sample_dynamics(fam, env_rs, mask ? &*mask : nullptr)
                      : fam.source_params();

    RolloutOptions opt;
    opt.min_steps = cfg.batch_steps;
    opt.ctx_mode = flags.train_ctx;
    opt.context_dim = flags.context_dim;
    opt.true_ctx = fam.normalize(c.values);
    opt.use_true_reward = true;
    opt.poison = cfg.poison_true_reward;
    RolloutBatch batch = collect_rollout(res.policy, res.value, fam, c, opt,
                                         rng::derive(cfg.seed, "rollout", iter));
    for (const Transition& t : batch.transitions) obs_stat.observe(t.s);

    compute_gae(batch, cfg.gamma, cfg.lambda_gae);
    normalize_advantages(batch);
    rng::Stream ppo_rs(rng::derive(cfg.seed, "ppo", iter));
    PpoDiag diag =
        ppo_update(res.policy, res.value, batch, ppo, ppo_rs, adam_pi, adam_vf);

    double mean_ret = 0.0;
    for (int e = 0; e < batch.episodes(); ++e) {
      int lo = batch.episode_start[e];
      int hi = e + 1 < batch.episodes() ? batch.episode_start[e + 1] : batch.size();
      mean_ret += batch.reward.segment(lo, hi - lo).sum();
    }
    mean_ret /= std::max(1, batch.episodes());

    bool evaluated = false;
    if (cfg.algorithm == "expert" && cfg.expert_eval_every > 0 &&
        (iter + 1) % cfg.expert_eval_every == 0) {
      eval_ret = eval_mean_return(res.policy, fam, fam.source_params(),
                                  cfg.expert_eval_episodes,
                                  rng::derive(cfg.seed, "expert-eval", iter),
                                  ContextMode::none);
      evaluated = true;
    }
    if (metrics)
      metrics->row({static_cast<double>(iter), c.values(0),
                    fam.param_count() > 1 ? c.values(1) : 0.0,
                    static_cast<double>(batch.episodes()),
                    static_cast<double>(batch.size()), mean_ret,
                    evaluated ? eval_ret : 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                    diag.pi_loss, diag.v_loss, diag.entropy, diag.approx_kl,
                    diag.clip_frac, static_cast<double>(diag.epochs_used)});
    if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) {
      res.obs_stats = obs_stat.count > 0
                          ? Normalizer{obs_stat.mean, obs_stat.stddev()}
                          : Normalizer::identity(fam.obs_dim);
      detail::save_checkpoint_iter(res, iter + 1);
    }
    if (evaluated && eval_ret >= bar) {
      res.expert_bar_met = true;
      break;
    }
  }
  res.obs_stats = obs_stat.count > 0 ? Normalizer{obs_stat.mean, obs_stat.stddev()}
                                     : Normalizer::identity(fam.obs_dim);
  res.final_eval_return = eval_ret;
  if (cfg.algorithm == "expert" && !res.expert_bar_met && !cfg.out.empty())
    detail::write_text((fsd::path(cfg.out) / "WARNING.txt").string(),
                       "expert training exhausted its budget below the success "
                       "bar (" + fmt_g17(eval_ret) + " < " + fmt_g17(bar) + ")\n");
  detail::save_final(res);
  return res;
}

inline TrainResult train_expert(const RunConfig& cfg) { return rl_train(cfg); }
inline TrainResult up_true_train(const RunConfig& cfg) { return rl_train(cfg); }

// ---------------------------------------------------------------------------

inline DemoSet collect_demos(const Policy& expert, const EnvFamily& fam,
                             const DynParams& source, int n, std::uint64_t seed,
                             const Normalizer& obs_stats) {
  DemoSet d;
  d.family_id = fam.family_id;
  d.source_values = source.values;
  d.obs_dim = fam.obs_dim;
  d.act_dim = fam.act_dim;
  d.obs_norm = obs_stats;
  d.episodes.resize(n);
  for (int ep = 0; ep < n; ++ep) {
    rng::Stream rs(rng::derive(seed, "demo-ep", ep));
    Env env = generate_env(fam, source);
    Vec s = env.reset(rs);
    while (!env.done()) {
      ActResult act = expert.act(s, Vec(0), rs, true);
      StepOut out = env.step(act.action);
      Transition tr;
      tr.s = s;
      tr.a = act.action;
      tr.s_next = out.s_next;
      tr.r_true = 0.0;  // rewards are deliberately not recorded
      tr.done = out.done;
      tr.c_true = source;
      d.episodes[ep].push_back(tr);
      s = out.s_next;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Adversarial imitation loop shared by GAIL, GAIL-rand, the ADAIL variants
// and VAE-ADAIL. Per iteration: sample dynamics, roll out, update the
// discriminator classifier, the reversed-gradient regression head, the
// posterior (or the VAE), then PPO on the discriminator reward. The true
// environment reward is never read on this path.

inline TrainResult imitation_train(const RunConfig& cfg, const DemoSet& demos) {
  validate_config(cfg);
  TrainResult res;
  res.cfg = cfg;
  res.family = cfg.effective_family();
  const EnvFamily& fam = res.family;
  AlgoFlags flags = algo_flags(cfg, fam);

  if (demos.family_id != fam.family_id)
    throw std::invalid_argument("demo family '" + demos.family_id +
                                "' does not match configured family '" +
                                fam.family_id + "'");

  rng::Stream init_rs(rng::derive(cfg.seed, "policy-init"));
  res.policy = Policy::make(fam, flags.train_ctx, flags.context_dim,
                            cfg.policy_hidden, init_rs);
  res.value = ValueFn::make(res.policy.input_width(), cfg.policy_hidden, init_rs);
  AdamState adam_pi, adam_vf;
  adam_pi.lr = cfg.policy_lr;
  adam_vf.lr = cfg.value_lr;

  const Normalizer& obs_norm = demos.obs_norm;
  res.obs_stats = obs_norm;
  rng::Stream disc_init(rng::derive(cfg.seed, "disc-init"));
  res.disc = Discriminator::make(fam, obs_norm, cfg.disc_hidden, cfg.lambda_grl,
                                 cfg.reward_clip_lo, cfg.reward_clip_hi,
                                 cfg.disc_state_only, cfg.disc_lr, disc_init);
  ReplayBuffer replay(static_cast<std::size_t>(cfg.replay_capacity));
  if (flags.train_posterior) {
    rng::Stream post_init(rng::derive(cfg.seed, "posterior-init"));
    res.posterior = Posterior::make(fam, obs_norm, cfg.posterior_hidden,
                                    cfg.huber_delta, cfg.posterior_lr, post_init);
  }
  if (flags.vae) {
    rng::Stream vae_init(rng::derive(cfg.seed, "vae-init"));
    res.encoder = Encoder::make(fam, obs_norm, cfg.latent_dim, cfg.vae_hidden,
                                cfg.vae_lr, vae_init);
    res.decoder = Decoder::make(fam, obs_norm, cfg.latent_dim, cfg.vae_hidden,
                                cfg.vae_lr, vae_init);
  }

  // expert transitions, encoded once
  std::vector<Transition> expert_pool;
  for (auto& ep : demos.episodes)
    expert_pool.insert(expert_pool.end(), ep.begin(), ep.end());
  if (expert_pool.empty()) throw std::invalid_argument("demo set is empty");
  std::vector<int> all_expert(expert_pool.size());
  std::iota(all_expert.begin(), all_expert.end(), 0);
  Mat expert_rows = res.disc->input_batch(expert_pool, all_expert);

  std::optional<BlackoutMask> mask;
  if (cfg.blackout_size > 0) {
    GridSpec grid = fam.default_grid(cfg.eval_cells);
    mask = blackout_region(grid, cfg.blackout_size, fam.source_cell(grid));
  }

  res.run_dir = cfg.out;
  auto metrics = detail::open_run_dir(cfg, cfg.demos);
  PpoConfig ppo{cfg.clip, cfg.vf_coef, cfg.ent_coef,
                cfg.epochs, cfg.minibatch, cfg.target_kl};

  PredictorPair train_predictor;
  if (flags.train_ctx == ContextMode::posterior) {
    if (flags.vae)
      train_predictor = make_predictor(*res.encoder);
    else if (res.posterior)
      train_predictor = make_predictor(*res.posterior);
    else
      throw ConfigError("posterior context requested but no posterior is trained");
  }

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    rng::Stream env_rs(rng::derive(cfg.seed, "envsample", iter));
    DynParams c = flags.sample_prior
                      ? sample_dynamics(fam, env_rs, mask ? &*mask : nullptr)
                      : fam.source_params();
    Vec c_norm = fam.normalize(c.values);

    RolloutOptions opt;
    opt.min_steps = cfg.batch_steps;
    opt.ctx_mode = flags.train_ctx;
    opt.context_dim = flags.context_dim;
    opt.true_ctx = c_norm;
    opt.predictor =
        flags.train_ctx == ContextMode::posterior ? &train_predictor : nullptr;
    opt.ema_beta = cfg.ema_beta;
    opt.use_true_reward = false;
    opt.poison = cfg.poison_true_reward;
    RolloutBatch batch = collect_rollout(res.policy, res.value, fam, c, opt,
                                         rng::derive(cfg.seed, "rollout", iter));

    // discriminator classification step (imitator 0, expert 1)
    rng::Stream disc_rs(rng::derive(cfg.seed, "disc", iter));
    int nb = std::min<int>(cfg.disc_batch, static_cast<int>(batch.transitions.size()));
    std::vector<int> pol_idx(nb), exp_idx(nb);
    for (int i = 0; i < nb; ++i) {
      pol_idx[i] = disc_rs.uniform_int(static_cast<int>(batch.transitions.size()));
      exp_idx[i] = disc_rs.uniform_int(static_cast<int>(expert_pool.size()));
    }
    Mat pol_rows = res.disc->input_batch(batch.transitions, pol_idx);
    Mat exp_rows(nb, expert_rows.cols());
    for (int i = 0; i < nb; ++i) exp_rows.row(i) = expert_rows.row(exp_idx[i]);
    DiscDiag cls_diag = res.disc->update_cls(pol_rows, exp_rows);

    // reversed-gradient dynamics regression on imitator samples only
    DiscDiag reg_diag;
    if (cfg.use_grl) {
      std::vector<int> reg_idx(nb);
      for (int i = 0; i < nb; ++i)
        reg_idx[i] =
            disc_rs.uniform_int(static_cast<int>(batch.transitions.size()));
      Mat reg_rows = res.disc->input_batch(batch.transitions, reg_idx);
      Mat reg_labels(nb, fam.param_count());
      for (int i = 0; i < nb; ++i) reg_labels.row(i) = c_norm.transpose();
      reg_diag = res.disc->update_reg(reg_rows, reg_labels);
    }

    // supervised posterior step from the replay buffer
    PostDiag post_diag;
    if (res.posterior && flags.train_posterior) {
      for (const Transition& t : batch.transitions)
        replay.push(res.posterior->input_row(t.s, t.a, t.s_next),
                    c_norm.transpose());
      rng::Stream post_rs(rng::derive(cfg.seed, "posterior", iter));
      Mat px, pc;
      replay.sample(cfg.posterior_batch, post_rs, px, pc);
      post_diag = res.posterior->update(px, pc);
    }

    // unsupervised dynamics learner step on the current rollout
    VaeDiag vae_diag;
    if (flags.vae) {
      rng::Stream vae_rs(rng::derive(cfg.seed, "vae", iter));
      int nv = std::min<int>(cfg.vae_batch,
                             static_cast<int>(batch.transitions.size()));
      std::vector<Transition> sampled(nv);
      std::vector<int> traj(nv);
      for (int i = 0; i < nv; ++i) {
        int j = vae_rs.uniform_int(static_cast<int>(batch.transitions.size()));
        sampled[i] = batch.transitions[j];
        int e = static_cast<int>(std::upper_bound(batch.episode_start.begin(),
                                                  batch.episode_start.end(), j) -
                                 batch.episode_start.begin()) -
                1;
        traj[i] = e;
      }
      VaeBatch vb = make_vae_batch(*res.encoder, *res.decoder, sampled, traj);
      VaeConfig vc{cfg.lambda_contrastive, cfg.vae_d0, cfg.latent_dim,
                   cfg.vae_pairs, cfg.vae_recon_var};
      vae_diag = vae_update(*res.encoder, *res.decoder, vb, vc, vae_rs);
    }

    // imitation rewards from the updated discriminator, then PPO
    batch.reward = res.disc->reward_batch(batch.transitions);
    compute_gae(batch, cfg.gamma, cfg.lambda_gae);
    normalize_advantages(batch);
    rng::Stream ppo_rs(rng::derive(cfg.seed, "ppo", iter));
    PpoDiag diag =
        ppo_update(res.policy, res.value, batch, ppo, ppo_rs, adam_pi, adam_vf);

    double mean_ret = 0.0;
    for (int e = 0; e < batch.episodes(); ++e) {
      int lo = batch.episode_start[e];
      int hi = e + 1 < batch.episodes() ? batch.episode_start[e + 1] : batch.size();
      mean_ret += batch.reward.segment(lo, hi - lo).sum();
    }
    mean_ret /= std::max(1, batch.episodes());

    if (metrics)
      metrics->row({static_cast<double>(iter), c.values(0),
                    fam.param_count() > 1 ? c.values(1) : 0.0,
                    static_cast<double>(batch.episodes()),
                    static_cast<double>(batch.size()), mean_ret, 0.0,
                    cls_diag.loss, cls_diag.accuracy, reg_diag.reg_mse,
                    post_diag.loss, vae_diag.elbo, vae_diag.contrastive,
                    diag.pi_loss, diag.v_loss, diag.entropy, diag.approx_kl,
                    diag.clip_frac, static_cast<double>(diag.epochs_used)});
    if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0)
      detail::save_checkpoint_iter(res, iter + 1);
  }
  detail::save_final(res);
  return res;
}

inline TrainResult adail_train(const RunConfig& cfg, const DemoSet& demos) {
  return imitation_train(cfg, demos);
}

inline TrainResult gail_rand_train(RunConfig cfg, const DemoSet& demos,
                                   bool use_grl) {
  cfg.use_grl = use_grl;
  if (cfg.algorithm != "gail" && cfg.algorithm != "gail_rand")
    cfg.algorithm = "gail_rand";
  return imitation_train(cfg, demos);
}

inline TrainResult vae_adail_train(const RunConfig& cfg, const DemoSet& demos) {
  return imitation_train(cfg, demos);
}

// Dispatch on the configured algorithm, loading demos when required.
inline TrainResult run_training(const RunConfig& cfg) {
  validate_config(cfg);
  if (!algorithm_needs_demos(cfg.algorithm)) return rl_train(cfg);
  DemoSet demos = read_demos(cfg.demos);
  return imitation_train(cfg, demos);
}

}  // namespace adail
