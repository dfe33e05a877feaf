#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adail/env.hpp"

namespace adail {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fully resolved experiment configuration. Defaults depend on the family
// and algorithm; a config file and then command-line overrides are applied
// on top, and the result is snapshotted into the run directory.
struct RunConfig {
  // run
  std::string algorithm = "expert";
  std::string family = "cartpole";
  std::uint64_t seed = 0;
  int iterations = 500;
  std::string demos;
  std::string out;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  int workers = 1;
  bool poison_true_reward = false;
  // env range overrides (empty = family defaults)
  std::vector<double> range_lo;
  std::vector<double> range_hi;
  // ppo
  double gamma = 0.99;
  double lambda_gae = 0.95;
  double clip = 0.2;
  int epochs = 10;
  int minibatch = 64;
  int batch_steps = 2048;
  double ent_coef = 0.01;
  double vf_coef = 0.5;
  double target_kl = 0.02;
  // policy / value
  double policy_lr = 0.0;
  std::vector<int> policy_hidden{64, 64};
  std::string policy_context = "auto";  // auto | none | true_params | posterior | random
  double value_lr = 0.0;
  // discriminator
  double disc_lr = 0.0;
  std::vector<int> disc_hidden{32, 32};
  double lambda_grl = 1.0;
  bool use_grl = false;
  double reward_clip_lo = 0.0;
  double reward_clip_hi = 10.0;
  bool disc_state_only = false;
  int disc_batch = 1024;
  // posterior
  double posterior_lr = 0.0;
  std::vector<int> posterior_hidden;
  double huber_delta = 1.0;
  double ema_beta = 0.9;
  int posterior_batch = 256;
  int replay_capacity = 50000;
  bool posterior_train_context = false;  // ablation: condition rollouts on it
  std::string posterior_enabled = "auto";  // auto | on | off
  // vae
  double vae_lr = 0.0;
  int latent_dim = 0;
  double lambda_contrastive = 0.1;
  double vae_d0 = 10.0;
  int vae_batch = 256;
  int vae_pairs = 32;
  double vae_recon_var = 1.0;
  std::vector<int> vae_hidden{200, 200};
  // eval
  int eval_cells = 13;
  int eval_episodes = 10;
  // expert
  int expert_eval_episodes = 100;
  int expert_eval_every = 10;
  double expert_bar = 0.0;  // 0 = family default (cartpole 195, puck from oracle)
  // blackout
  int blackout_size = 0;  // 0 none, else odd region width

  // family with any range overrides applied; owned by the caller
  EnvFamily effective_family() const {
    EnvFamily f = EnvFamily::get(family);
    if (!range_lo.empty() || !range_hi.empty()) {
      if ((!range_lo.empty() &&
           range_lo.size() != static_cast<std::size_t>(f.param_count())) ||
          (!range_hi.empty() &&
           range_hi.size() != static_cast<std::size_t>(f.param_count())))
        throw ConfigError("env.range_lo/range_hi must list one value per parameter");
      for (int i = 0; i < f.param_count(); ++i) {
        if (!range_lo.empty()) f.param_ranges[i].first = range_lo[i];
        if (!range_hi.empty()) f.param_ranges[i].second = range_hi[i];
        if (f.param_ranges[i].first > f.param_ranges[i].second)
          throw ConfigError("env range for " + f.param_names[i] + " is inverted");
      }
      if (!f.in_range(f.source_values))
        throw ConfigError("source parameters fall outside the overridden ranges");
    }
    return f;
  }
};

namespace cfgdetail {

enum class KeyType { text, boolean, integer, unsigned64, real, int_list, real_list };

inline const char* type_name(KeyType t) {
  switch (t) {
    case KeyType::text: return "string";
    case KeyType::boolean: return "bool";
    case KeyType::integer: return "int";
    case KeyType::unsigned64: return "uint64";
    case KeyType::real: return "float";
    case KeyType::int_list: return "int list";
    case KeyType::real_list: return "float list";
  }
  return "?";
}

struct KeyDef {
  std::string name;
  KeyType type;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ";" : "") + std::to_string(v[i]);
  return s;
}

inline std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt_g17(v[i]);
  return s;
}

inline std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ';'))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

inline std::vector<double> parse_reals(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ';'))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("not a bool");
}

inline const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    auto text = [&t](const std::string& n, std::string RunConfig::*m) {
      t.push_back({n, KeyType::text,
                   [m](RunConfig& c, const std::string& v) { c.*m = v; },
                   [m](const RunConfig& c) { return c.*m; }});
    };
    auto boolean = [&t](const std::string& n, bool RunConfig::*m) {
      t.push_back({n, KeyType::boolean,
                   [m](RunConfig& c, const std::string& v) { c.*m = parse_bool(v); },
                   [m](const RunConfig& c) { return c.*m ? "true" : "false"; }});
    };
    auto integer = [&t](const std::string& n, int RunConfig::*m) {
      t.push_back({n, KeyType::integer,
                   [m](RunConfig& c, const std::string& v) { c.*m = std::stoi(v); },
                   [m](const RunConfig& c) { return std::to_string(c.*m); }});
    };
    auto real = [&t](const std::string& n, double RunConfig::*m) {
      t.push_back({n, KeyType::real,
                   [m](RunConfig& c, const std::string& v) { c.*m = std::stod(v); },
                   [m](const RunConfig& c) { return fmt_g17(c.*m); }});
    };
    auto int_list = [&t](const std::string& n, std::vector<int> RunConfig::*m) {
      t.push_back({n, KeyType::int_list,
                   [m](RunConfig& c, const std::string& v) { c.*m = parse_ints(v); },
                   [m](const RunConfig& c) { return join_ints(c.*m); }});
    };
    auto real_list = [&t](const std::string& n, std::vector<double> RunConfig::*m) {
      t.push_back({n, KeyType::real_list,
                   [m](RunConfig& c, const std::string& v) { c.*m = parse_reals(v); },
                   [m](const RunConfig& c) { return join_reals(c.*m); }});
    };

    text("run.algorithm", &RunConfig::algorithm);
    text("run.family", &RunConfig::family);
    t.push_back({"run.seed", KeyType::unsigned64,
                 [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    integer("run.iterations", &RunConfig::iterations);
    text("run.demos", &RunConfig::demos);
    text("run.out", &RunConfig::out);
    integer("run.checkpoint_every", &RunConfig::checkpoint_every);
    integer("run.workers", &RunConfig::workers);
    boolean("run.poison_true_reward", &RunConfig::poison_true_reward);
    real_list("env.range_lo", &RunConfig::range_lo);
    real_list("env.range_hi", &RunConfig::range_hi);
    real("ppo.gamma", &RunConfig::gamma);
    real("ppo.lambda_gae", &RunConfig::lambda_gae);
    real("ppo.clip", &RunConfig::clip);
    integer("ppo.epochs", &RunConfig::epochs);
    integer("ppo.minibatch", &RunConfig::minibatch);
    integer("ppo.batch_steps", &RunConfig::batch_steps);
    real("ppo.ent_coef", &RunConfig::ent_coef);
    real("ppo.vf_coef", &RunConfig::vf_coef);
    real("ppo.target_kl", &RunConfig::target_kl);
    real("policy.lr", &RunConfig::policy_lr);
    int_list("policy.hidden", &RunConfig::policy_hidden);
    text("policy.context", &RunConfig::policy_context);
    real("value.lr", &RunConfig::value_lr);
    real("disc.lr", &RunConfig::disc_lr);
    int_list("disc.hidden", &RunConfig::disc_hidden);
    real("disc.lambda_grl", &RunConfig::lambda_grl);
    boolean("disc.use_grl", &RunConfig::use_grl);
    real("disc.reward_clip_lo", &RunConfig::reward_clip_lo);
    real("disc.reward_clip_hi", &RunConfig::reward_clip_hi);
    boolean("disc.state_only", &RunConfig::disc_state_only);
    integer("disc.batch", &RunConfig::disc_batch);
    real("posterior.lr", &RunConfig::posterior_lr);
    int_list("posterior.hidden", &RunConfig::posterior_hidden);
    real("posterior.delta", &RunConfig::huber_delta);
    real("posterior.ema_beta", &RunConfig::ema_beta);
    integer("posterior.batch", &RunConfig::posterior_batch);
    integer("posterior.replay_capacity", &RunConfig::replay_capacity);
    boolean("posterior.train_context", &RunConfig::posterior_train_context);
    text("posterior.enabled", &RunConfig::posterior_enabled);
    real("vae.lr", &RunConfig::vae_lr);
    integer("vae.latent_dim", &RunConfig::latent_dim);
    real("vae.lambda_contrastive", &RunConfig::lambda_contrastive);
    real("vae.d0", &RunConfig::vae_d0);
    integer("vae.batch", &RunConfig::vae_batch);
    integer("vae.pairs", &RunConfig::vae_pairs);
    real("vae.recon_var", &RunConfig::vae_recon_var);
    int_list("vae.hidden", &RunConfig::vae_hidden);
    integer("eval.cells", &RunConfig::eval_cells);
    integer("eval.episodes", &RunConfig::eval_episodes);
    integer("expert.eval_episodes", &RunConfig::expert_eval_episodes);
    integer("expert.eval_every", &RunConfig::expert_eval_every);
    real("expert.bar", &RunConfig::expert_bar);
    integer("blackout.size", &RunConfig::blackout_size);
    return t;
  }();
  return table;
}

inline const KeyDef* find_key(const std::string& name) {
  for (auto& k : key_table())
    if (k.name == name) return &k;
  return nullptr;
}

inline int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string nearest_key(const std::string& name) {
  int best = 1 << 30;
  std::string who;
  for (auto& k : key_table()) {
    int d = edit_distance(name, k.name);
    if (d < best) {
      best = d;
      who = k.name;
    }
  }
  return who;
}

struct RawEntry {
  std::string key;
  std::string value;
  int line;  // 0 for command-line overrides
};

inline RawEntry parse_line(const std::string& raw, int line_no) {
  auto eq = raw.find('=');
  if (eq == std::string::npos)
    throw ConfigError("line " + std::to_string(line_no) +
                      ": expected 'section.key = value'");
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  return {trim(raw.substr(0, eq)), trim(raw.substr(eq + 1)), line_no};
}

inline void apply_entry(RunConfig& cfg, const RawEntry& e) {
  const KeyDef* def = find_key(e.key);
  if (!def) {
    std::string where =
        e.line > 0 ? "line " + std::to_string(e.line) + ": " : std::string();
    throw ConfigError(where + "unknown key '" + e.key + "' (did you mean '" +
                      nearest_key(e.key) + "'?)");
  }
  try {
    def->set(cfg, e.value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    std::string where =
        e.line > 0 ? "line " + std::to_string(e.line) + ": " : std::string();
    throw ConfigError(where + "expected " + std::string(type_name(def->type)) +
                      " for key '" + e.key + "', got '" + e.value + "'");
  }
}

}  // namespace cfgdetail

// Table 5 / Table 6 learning rates and shapes keyed by family and algorithm.
inline RunConfig default_config(const std::string& family,
                                const std::string& algorithm) {
  RunConfig c;
  c.family = family;
  c.algorithm = algorithm;
  const EnvFamily& fam = EnvFamily::get(family);
  if (family == "cartpole") {
    c.policy_lr = 0.0005586;
    c.disc_lr = 0.000167881;
    c.posterior_lr = 0.00532;
    c.posterior_hidden = {76, 140};
    c.expert_bar = 195.0;
  } else {
    c.policy_lr = 0.000047;
    c.disc_lr = 0.000037;
    c.posterior_lr = 0.002353;
    c.posterior_hidden = {72, 177};
    c.expert_bar = 0.0;  // derived from the reference controller at run time
  }
  if (algorithm == "vae_adail") {
    c.policy_lr = 0.00005596;
    c.disc_lr = 0.000046077;
  }
  c.vae_lr = 0.000094;
  c.value_lr = c.policy_lr;
  c.latent_dim = fam.param_count();
  c.use_grl = algorithm.rfind("adail", 0) == 0;  // adail_* variants
  return c;
}

inline const std::vector<std::string>& known_algorithms() {
  static const std::vector<std::string> a{"expert",     "gail",       "gail_rand",
                                          "adail_true", "adail_pred", "adail_rand",
                                          "vae_adail",  "up_true"};
  return a;
}

inline bool algorithm_needs_demos(const std::string& algo) {
  return algo != "expert" && algo != "up_true";
}

// Defaults first, file second, command-line overrides last.
inline RunConfig parse_config(const std::optional<std::string>& path,
                              const std::vector<std::string>& overrides) {
  std::vector<cfgdetail::RawEntry> entries;
  if (path) {
    std::ifstream is(*path);
    if (!is) throw ConfigError("cannot open config file " + *path);
    std::string line;
    int no = 0;
    while (std::getline(is, line)) {
      ++no;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto nonblank = line.find_first_not_of(" \t\r");
      if (nonblank == std::string::npos) continue;
      entries.push_back(cfgdetail::parse_line(line, no));
    }
  }
  for (auto& o : overrides) entries.push_back(cfgdetail::parse_line(o, 0));

  // family and algorithm decide the default table, so resolve them first
  std::string family = "cartpole", algorithm = "expert";
  for (auto& e : entries) {
    if (e.key == "run.family") family = e.value;
    if (e.key == "run.algorithm") algorithm = e.value;
  }
  try {
    EnvFamily::get(family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (std::find(known_algorithms().begin(), known_algorithms().end(), algorithm) ==
      known_algorithms().end())
    throw ConfigError("unknown algorithm '" + algorithm + "'");

  RunConfig cfg = default_config(family, algorithm);
  for (auto& e : entries) cfgdetail::apply_entry(cfg, e);
  return cfg;
}

inline void validate_config(const RunConfig& cfg) {
  if (std::find(known_algorithms().begin(), known_algorithms().end(),
                cfg.algorithm) == known_algorithms().end())
    throw ConfigError("unknown algorithm '" + cfg.algorithm + "'");
  try {
    cfg.effective_family();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (algorithm_needs_demos(cfg.algorithm) && cfg.demos.empty())
    throw ConfigError("demos required for algorithm '" + cfg.algorithm + "'");
  if (cfg.iterations < 0) throw ConfigError("run.iterations must be >= 0");
  if (cfg.blackout_size != 0 &&
      (cfg.blackout_size % 2 == 0 || cfg.blackout_size < 0))
    throw ConfigError("blackout.size must be odd");
  if (cfg.lambda_grl < 0) throw ConfigError("disc.lambda_grl must be >= 0");
  if (cfg.huber_delta <= 0) throw ConfigError("posterior.delta must be > 0");
  if (cfg.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (cfg.policy_context != "auto" && cfg.policy_context != "none" &&
      cfg.policy_context != "true_params" && cfg.policy_context != "posterior" &&
      cfg.policy_context != "random")
    throw ConfigError("policy.context must be auto|none|true_params|posterior|random");
  if (cfg.posterior_enabled != "auto" && cfg.posterior_enabled != "on" &&
      cfg.posterior_enabled != "off")
    throw ConfigError("posterior.enabled must be auto|on|off");
}

// Canonical resolved form; parsing it back reproduces the config.
inline std::string config_snapshot(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# resolved run configuration\n";
  for (auto& k : cfgdetail::key_table())
    os << k.name << " = " << k.get(cfg) << "\n";
  return os.str();
}

inline RunConfig config_from_snapshot_file(const std::string& path) {
  return parse_config(std::optional<std::string>(path), {});
}

}  // namespace adail
