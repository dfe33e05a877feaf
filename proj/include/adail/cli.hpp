#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adail/check.hpp"
#include "adail/config.hpp"
#include "adail/eval.hpp"
#include "adail/trainer.hpp"

namespace adail::cli {

namespace fsp = std::filesystem;

// exit codes: 0 success, 2 config error, 3 runtime failure, 4 check failure
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;
constexpr int kCheckFailure = 4;

inline std::uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!is) break;
  }
  return h;
}

inline std::string default_out_root() {
  const char* root = std::getenv("ADAIL_RUN_ROOT");
  return root && *root ? std::string(root) : std::string("runs");
}

inline void resolve_out(RunConfig& cfg, const std::string& verb) {
  if (!cfg.out.empty()) return;
  cfg.out = default_out_root() + "/" + verb + "-" + cfg.algorithm + "-seed" +
            std::to_string(cfg.seed);
}

// ---------------------------------------------------------------------------
// Artifact loading from a finished run directory

struct LoadedRun {
  RunConfig cfg;
  EnvFamily family;
  Policy policy;
  Normalizer policy_obs_stats;
  std::optional<Posterior> posterior;
  std::optional<Encoder> encoder;
};

inline std::map<std::string, std::string> read_meta(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline Normalizer extract_norm(
    const std::vector<std::pair<std::string, Mat>>& extra, int dim) {
  Normalizer n = Normalizer::identity(dim);
  for (auto& [name, m] : extra) {
    if (name == "norm.obs_mean") n.mean = m.row(0).transpose();
    if (name == "norm.obs_std") n.std = m.row(0).transpose();
  }
  return n;
}

inline LoadedRun load_run(const std::string& run_dir) {
  LoadedRun lr;
  lr.cfg = config_from_snapshot_file(run_dir + "/config.snapshot");
  lr.family = lr.cfg.effective_family();
  auto meta = read_meta(run_dir + "/final/policy.meta");

  rng::Stream dummy(0);
  lr.policy = Policy::make(lr.family, context_mode_from(meta.at("context_mode")),
                           std::stoi(meta.at("context_dim")), lr.cfg.policy_hidden,
                           dummy);
  auto extra = load_paramnet(run_dir + "/final/policy.ck", lr.policy.net);
  lr.policy_obs_stats = extract_norm(extra, lr.family.obs_dim);

  std::string post_path = run_dir + "/final/posterior.ck";
  if (fsp::exists(post_path)) {
    rng::Stream d2(0);
    Posterior q = Posterior::make(lr.family, Normalizer::identity(lr.family.obs_dim),
                                  lr.cfg.posterior_hidden, lr.cfg.huber_delta,
                                  lr.cfg.posterior_lr, d2);
    auto px = load_paramnet(post_path, q.net);
    q.obs_norm = extract_norm(px, lr.family.obs_dim);
    lr.posterior = std::move(q);
  }
  std::string enc_path = run_dir + "/final/encoder.ck";
  if (fsp::exists(enc_path)) {
    rng::Stream d3(0);
    Encoder e = Encoder::make(lr.family, Normalizer::identity(lr.family.obs_dim),
                              lr.cfg.latent_dim, lr.cfg.vae_hidden, lr.cfg.vae_lr,
                              d3);
    auto ex = load_paramnet(enc_path, e.net);
    e.obs_norm = extract_norm(ex, lr.family.obs_dim);
    lr.encoder = std::move(e);
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Verbs

struct CommonArgs {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
};

inline RunConfig build_config(const CommonArgs& args,
                              const std::vector<std::string>& extra = {}) {
  std::vector<std::string> all = args.overrides;
  all.insert(all.end(), extra.begin(), extra.end());
  return parse_config(args.config, all);
}

inline int verb_train(RunConfig cfg, const std::string& verb) {
  validate_config(cfg);
  resolve_out(cfg, verb);
  TrainResult res = run_training(cfg);
  std::cout << "run " << res.run_dir << " finished";
  if (cfg.algorithm == "expert")
    std::cout << (res.expert_bar_met ? " (success bar met)" : " (below success bar)");
  std::cout << "\n";
  return kOk;
}

inline int verb_collect_demos(const std::string& run_dir, int n,
                              std::uint64_t seed, const std::string& out_path) {
  LoadedRun lr = load_run(run_dir);
  DemoSet demos = collect_demos(lr.policy, lr.family, lr.family.source_params(),
                                n, seed, lr.policy_obs_stats);
  fsp::path out(out_path);
  if (out.has_parent_path()) fsp::create_directories(out.parent_path());
  write_demos(out_path, demos);
  double mean_len = demos.transition_count() / double(std::max<std::size_t>(1, demos.episodes.size()));
  std::cout << "wrote " << demos.episodes.size() << " episodes ("
            << demos.transition_count() << " transitions, mean length "
            << mean_len << ") to " << out_path << "\n";
  return kOk;
}

inline ContextMode default_eval_context(const RunConfig& cfg) {
  AlgoFlags flags = algo_flags(cfg, cfg.effective_family());
  return flags.eval_ctx;
}

inline int verb_eval_grid(const std::string& run_dir, std::string context,
                          int cells, int episodes, std::string name,
                          std::uint64_t seed, int workers) {
  LoadedRun lr = load_run(run_dir);
  ContextMode ctx = context == "auto" ? default_eval_context(lr.cfg)
                                      : context_mode_from(context);
  if (cells <= 0) cells = lr.cfg.eval_cells;
  if (episodes <= 0) episodes = lr.cfg.eval_episodes;
  if (workers <= 0) workers = lr.cfg.workers;

  PredictorPair predictor;
  if (ctx == ContextMode::posterior) {
    if (lr.posterior)
      predictor = make_predictor(*lr.posterior);
    else if (lr.encoder)
      predictor = make_predictor(*lr.encoder);
    else
      throw std::runtime_error("run has no posterior or encoder checkpoint");
  }

  GridSpec grid = lr.family.default_grid(cells);
  std::optional<BlackoutMask> mask;
  if (lr.cfg.blackout_size > 0)
    mask = blackout_region(grid, lr.cfg.blackout_size,
                           lr.family.source_cell(grid));
  Heatmap h = grid_eval(lr.policy, lr.family, grid, ctx,
                        ctx == ContextMode::posterior ? &predictor : nullptr,
                        episodes, seed, mask ? &*mask : nullptr, workers,
                        lr.cfg.ema_beta);
  fsp::create_directories(fsp::path(run_dir) / "eval");
  if (name.empty()) name = "return_" + to_string(ctx) + "_" + std::to_string(cells);
  std::string base = (fsp::path(run_dir) / "eval" / name).string();
  write_heatmap(h, base);
  std::cout << "grid mean " << fmt_g17(h.grid_mean()) << " +- "
            << fmt_g17(h.grid_std()) << " over " << h.cells() << " cells -> "
            << base << ".{csv,ppm,json}\n";
  return kOk;
}

inline int verb_rmse_grid(const std::string& run_dir, int cells, int episodes,
                          std::string name, std::uint64_t seed, int workers) {
  LoadedRun lr = load_run(run_dir);
  if (!lr.posterior)
    throw std::runtime_error("run has no posterior checkpoint");
  if (cells <= 0) cells = lr.cfg.eval_cells;
  if (episodes <= 0) episodes = lr.cfg.eval_episodes;
  if (workers <= 0) workers = lr.cfg.workers;
  PredictorPair predictor = make_predictor(*lr.posterior);
  GridSpec grid = lr.family.default_grid(cells);
  std::optional<BlackoutMask> mask;
  if (lr.cfg.blackout_size > 0)
    mask = blackout_region(grid, lr.cfg.blackout_size,
                           lr.family.source_cell(grid));
  Heatmap h = posterior_rmse_grid(predictor, lr.policy, lr.family, grid, episodes,
                                  seed, mask ? &*mask : nullptr, workers,
                                  lr.cfg.ema_beta);
  fsp::create_directories(fsp::path(run_dir) / "eval");
  if (name.empty()) name = "rmse_" + std::to_string(cells);
  std::string base = (fsp::path(run_dir) / "eval" / name).string();
  write_heatmap(h, base);
  std::cout << "rmse grid mean " << fmt_g17(h.grid_mean()) << " +- "
            << fmt_g17(h.grid_std()) << " -> " << base << ".{csv,ppm,json}\n";
  return kOk;
}

inline int verb_check(std::uint64_t seed, int trials) {
  auto results = checks::run_internal_checks(seed, trials);
  int passed = 0, failed = 0;
  for (auto& r : results) {
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " - "
              << r.detail << "\n";
    (r.passed ? passed : failed) += 1;
  }
  std::cout << "check: " << passed << " passed, " << failed << " failed\n";
  return failed == 0 ? kOk : kCheckFailure;
}

// Re-execute a finished run from its config snapshot and verify that the
// metrics stream reproduces byte for byte.
inline int verb_replay(const std::string& run_dir) {
  RunConfig cfg = config_from_snapshot_file(run_dir + "/config.snapshot");
  std::string demo_copy = run_dir + "/demos.ndjson";
  if (fsp::exists(demo_copy)) cfg.demos = demo_copy;
  std::string tmp = run_dir + "/.replay";
  fsp::remove_all(tmp);
  cfg.out = tmp;
  run_training(cfg);
  std::uint64_t h_orig = file_hash(run_dir + "/metrics.csv");
  std::uint64_t h_new = file_hash(tmp + "/metrics.csv");
  bool match = h_orig == h_new;
  std::cout << "original metrics hash " << std::hex << h_orig
            << ", replay metrics hash " << h_new << std::dec << " -> "
            << (match ? "match" : "MISMATCH") << "\n";
  fsp::remove_all(tmp);
  return match ? kOk : kCheckFailure;
}

}  // namespace adail::cli
