#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include "adail/config.hpp"

using namespace adail;

namespace {

std::string write_tmp(const std::string& name, const std::string& body) {
  std::string path = "/tmp/adail_cfg_" + name;
  std::ofstream os(path);
  os << body;
  return path;
}

}  // namespace

TEST_CASE("pure defaults carry the published learning rates") {
  RunConfig c = parse_config(std::nullopt, {});
  CHECK(c.family == "cartpole");
  CHECK(c.policy_lr == 0.0005586);
  CHECK(c.disc_lr == 0.000167881);
  CHECK(c.posterior_lr == 0.00532);
  REQUIRE(c.posterior_hidden.size() == 2);
  CHECK(c.posterior_hidden[0] == 76);
  CHECK(c.posterior_hidden[1] == 140);
  CHECK(c.expert_bar == 195.0);

  RunConfig p = parse_config(std::nullopt, {"run.family=puck"});
  CHECK(p.policy_lr == 0.000047);
  CHECK(p.disc_lr == 0.000037);
  CHECK(p.posterior_lr == 0.002353);
  CHECK(p.posterior_hidden[0] == 72);
  CHECK(p.posterior_hidden[1] == 177);
  CHECK(p.latent_dim == 2);

  RunConfig v = parse_config(std::nullopt, {"run.algorithm=vae_adail",
                                            "run.demos=x"});
  CHECK(v.policy_lr == 0.00005596);
  CHECK(v.disc_lr == 0.000046077);
  CHECK(v.vae_lr == 0.000094);
}

TEST_CASE("file values override defaults and flags override files") {
  std::string path = write_tmp("basic.cfg",
                               "# comment\n"
                               "policy.lr = 0.001\n"
                               "ppo.epochs = 4   # trailing comment\n");
  RunConfig c = parse_config(path, {});
  CHECK(c.policy_lr == 0.001);
  CHECK(c.epochs == 4);
  RunConfig c2 = parse_config(path, {"policy.lr=0.25"});
  CHECK(c2.policy_lr == 0.25);
  std::remove(path.c_str());
}

TEST_CASE("unknown keys suggest the nearest valid key") {
  try {
    parse_config(std::nullopt, {"polcy.lr=0.1"});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("polcy.lr") != std::string::npos);
    CHECK(msg.find("policy.lr") != std::string::npos);
  }
}

TEST_CASE("type errors carry the line number") {
  std::string path = write_tmp("types.cfg", "ppo.gamma = 0.9\nppo.epochs = soon\n");
  try {
    parse_config(path, {});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("int") != std::string::npos);
    CHECK(msg.find("ppo.epochs") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("snapshot round trips exactly") {
  RunConfig c = parse_config(
      std::nullopt, {"run.family=puck", "run.algorithm=adail_pred",
                     "run.demos=/tmp/demos", "policy.lr=0.000125",
                     "env.range_lo=0;0", "env.range_hi=0;4",
                     "policy.hidden=32;32", "run.seed=99"});
  std::string snap = config_snapshot(c);
  std::string path = write_tmp("snap.cfg", snap);
  RunConfig back = config_from_snapshot_file(path);
  CHECK(config_snapshot(back) == snap);
  CHECK(back.range_lo == c.range_lo);
  CHECK(back.policy_hidden == c.policy_hidden);
  CHECK(back.seed == 99);
  std::remove(path.c_str());
}

TEST_CASE("validation catches missing demos and bad settings") {
  RunConfig c = parse_config(std::nullopt, {"run.algorithm=adail_pred"});
  try {
    validate_config(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("demos required") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(std::nullopt, {"run.algorithm=dagger"}), ConfigError);
  CHECK_THROWS_AS(parse_config(std::nullopt, {"run.family=hopper"}), ConfigError);

  RunConfig even = parse_config(std::nullopt, {"blackout.size=4"});
  CHECK_THROWS_AS(validate_config(even), ConfigError);
}

TEST_CASE("range overrides reshape the family") {
  RunConfig c = parse_config(std::nullopt,
                             {"run.family=puck", "env.range_lo=0;0",
                              "env.range_hi=0;4"});
  EnvFamily f = c.effective_family();
  CHECK(f.param_ranges[0].first == 0.0);
  CHECK(f.param_ranges[0].second == 0.0);
  CHECK(f.param_ranges[1].second == 4.0);
  // collapsed axis normalizes to the midpoint code
  Vec v(2);
  v << 0.0, 1.0;
  CHECK(f.normalize(v)(0) == 0.0);

  RunConfig bad = parse_config(std::nullopt,
                               {"run.family=puck", "env.range_lo=2;0",
                                "env.range_hi=-2;4"});
  CHECK_THROWS_AS(bad.effective_family(), ConfigError);

  // source point must stay inside the overridden ranges
  RunConfig off = parse_config(std::nullopt,
                               {"run.family=puck", "env.range_lo=1;0"});
  CHECK_THROWS_AS(off.effective_family(), ConfigError);
}

TEST_CASE("use_grl defaults follow the algorithm") {
  CHECK(parse_config(std::nullopt, {"run.algorithm=adail_true", "run.demos=x"}).use_grl);
  CHECK(parse_config(std::nullopt, {"run.algorithm=adail_rand", "run.demos=x"}).use_grl);
  CHECK_FALSE(parse_config(std::nullopt, {"run.algorithm=gail_rand", "run.demos=x"}).use_grl);
  CHECK_FALSE(parse_config(std::nullopt, {"run.algorithm=vae_adail", "run.demos=x"}).use_grl);
  RunConfig forced = parse_config(
      std::nullopt, {"run.algorithm=gail_rand", "run.demos=x", "disc.use_grl=true"});
  CHECK(forced.use_grl);
}
