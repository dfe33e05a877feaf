#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "adail/env.hpp"

using namespace adail;

TEST_CASE("family registry and source domains") {
  const EnvFamily& cp = EnvFamily::get("cartpole");
  CHECK(cp.param_names.size() == 1);
  CHECK(cp.source_values(0) == 1.0);
  CHECK(cp.horizon == 200);

  const EnvFamily& pk = EnvFamily::get("puck");
  CHECK(pk.source_values(0) == 0.0);
  CHECK(pk.source_values(1) == 1.0);
  CHECK(pk.param_ranges[0].first == -5.0);
  CHECK(pk.param_ranges[1].second == 4.0);

  CHECK_THROWS_AS(EnvFamily::get("hopper"), std::invalid_argument);
}

TEST_CASE("normalization round trip") {
  const EnvFamily& pk = EnvFamily::get("puck");
  rng::Stream rs(1);
  for (int i = 0; i < 200; ++i) {
    Vec n(2);
    n << rs.uniform(-1.0, 1.0), rs.uniform(-1.0, 1.0);
    Vec back = pk.normalize(pk.denormalize(n));
    CHECK((back - n).cwiseAbs().maxCoeff() < 1e-12);
  }
  // collapsed range maps to the midpoint code 0
  EnvFamily f = EnvFamily::puck();
  f.param_ranges[0] = {0.0, 0.0};
  Vec v(2);
  v << 0.0, 3.0;
  CHECK(f.normalize(v)(0) == 0.0);
}

TEST_CASE("generate_env validates family and range") {
  const EnvFamily& cp = EnvFamily::get("cartpole");
  CHECK_THROWS_AS(generate_env(cp, {"puck", Vec::Zero(2)}), std::invalid_argument);
  CHECK_THROWS_AS(generate_env(cp, {"cartpole", Vec::Constant(1, 2.0)}),
                  std::invalid_argument);
  CHECK_NOTHROW(generate_env(cp, {"cartpole", Vec::Constant(1, 2.0)}, true));
  Env e = generate_env(cp, cp.source_params());
  CHECK(e.params().values(0) == 1.0);
}

TEST_CASE("deterministic reset and trajectories") {
  const EnvFamily& cp = EnvFamily::get("cartpole");
  Env a = generate_env(cp, cp.source_params());
  Env b = generate_env(cp, cp.source_params());
  Vec sa = a.reset(std::uint64_t{77});
  Vec sb = b.reset(std::uint64_t{77});
  CHECK(sa.cwiseEqual(sb).all());
  for (int t = 0; t < 50 && !a.done(); ++t) {
    Vec act = Vec::Constant(1, static_cast<double>(t % 2));
    StepOut oa = a.step(act);
    StepOut ob = b.step(act);
    CHECK(oa.s_next.cwiseEqual(ob.s_next).all());
    CHECK(oa.r_true == ob.r_true);
  }
}

TEST_CASE("cartpole reset bounds over many seeds") {
  const EnvFamily& cp = EnvFamily::get("cartpole");
  Env e = generate_env(cp, cp.source_params());
  for (int seed = 0; seed < 1000; ++seed) {
    Vec s = e.reset(static_cast<std::uint64_t>(seed));
    CHECK(s.cwiseAbs().maxCoeff() <= 0.05);
  }
}

TEST_CASE("puck reset has zero velocity and bounded position") {
  const EnvFamily& pk = EnvFamily::get("puck");
  Env e = generate_env(pk, pk.source_params());
  for (int seed = 0; seed < 100; ++seed) {
    Vec s = e.reset(static_cast<std::uint64_t>(seed));
    CHECK(s(2) == 0.0);
    CHECK(s(3) == 0.0);
    CHECK(std::abs(s(0)) <= 2.0);
    CHECK(std::abs(s(1)) <= 2.0);
  }
}

TEST_CASE("cartpole force negation and mirror symmetry") {
  // negating Fm negates the applied force exactly
  for (int a : {0, 1}) {
    CHECK(cartpole_force(a, 1.0) == -cartpole_force(a, -1.0));
    CHECK(cartpole_force(1 - a, 1.0) == -cartpole_force(a, 1.0));
  }
  // mirrored state under negated Fm follows the mirrored trajectory
  rng::Stream rs(5);
  for (int trial = 0; trial < 50; ++trial) {
    Vec s(4);
    for (int i = 0; i < 4; ++i) s(i) = rs.uniform(-0.1, 0.1);
    int action = rs.uniform_int(2);
    double fm = rs.uniform(-1.0, 1.0);
    StepOut fwd = cartpole_step(s, action, fm);
    StepOut mir = cartpole_step(-s, action, -fm);
    CHECK((mir.s_next + fwd.s_next).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("cartpole zero force matches unactuated dynamics") {
  rng::Stream rs(9);
  Vec s(4);
  for (int i = 0; i < 4; ++i) s(i) = rs.uniform(-0.05, 0.05);
  Vec s0 = s, s1 = s;
  for (int t = 0; t < 20; ++t) {
    s0 = cartpole_step(s0, t % 2, 0.0).s_next;
    s1 = cartpole_step(s1, (t + 1) % 2, 0.0).s_next;  // actions irrelevant at Fm=0
  }
  CHECK(s0.cwiseEqual(s1).all());
}

TEST_CASE("cartpole single-step hand evaluation from the origin state") {
  Vec s = Vec::Zero(4);
  StepOut out = cartpole_step(s, 1, 1.0);
  // by hand: F=10, temp = 10/1.1, thacc = -temp/(0.5*(4/3 - 0.1/1.1)),
  // xacc = temp - 0.05*thacc/1.1, positions unchanged at first order
  double temp = 10.0 / 1.1;
  double thacc = (0.0 - temp) / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
  double xacc = temp - 0.05 * thacc / 1.1;
  CHECK(out.s_next(0) == 0.0);
  CHECK(out.s_next(2) == 0.0);
  CHECK(out.s_next(1) == Catch::Approx(0.02 * xacc).epsilon(1e-14));
  CHECK(out.s_next(3) == Catch::Approx(0.02 * thacc).epsilon(1e-14));
  CHECK(out.r_true == 1.0);
  CHECK(!out.done);
}

TEST_CASE("cartpole termination and horizon") {
  const EnvFamily& cp = EnvFamily::get("cartpole");
  Env e = generate_env(cp, cp.source_params());
  e.reset(std::uint64_t{3});
  int steps = 0;
  while (!e.done()) {
    e.step(Vec::Constant(1, 1.0));  // constant push fails fast
    ++steps;
  }
  CHECK(steps < 200);
  CHECK_THROWS_AS(e.step(Vec::Constant(1, 1.0)), std::logic_error);
}

TEST_CASE("puck one-step hand evaluations") {
  // equilibrium: no action, no gravity, no friction, zero velocity
  Vec s(4);
  s << 0.4, -0.2, 0.0, 0.0;
  StepOut out = puck_step(s, Vec::Zero(2), 0.0, 0.0);
  CHECK(out.s_next.cwiseEqual(s).all());

  // friction decay: v = [1, 0], Fr = 1 -> v' = [0.95, 0]
  s << 0.0, 0.0, 1.0, 0.0;
  out = puck_step(s, Vec::Zero(2), 0.0, 1.0);
  CHECK(out.s_next(2) == Catch::Approx(0.95).epsilon(1e-15));
  CHECK(out.s_next(3) == 0.0);

  // force balance: thrust exactly cancelling gravity leaves v at zero
  s << 1.0, 1.0, 0.0, 0.0;
  Vec a(2);
  a << -5.0, 0.0;
  out = puck_step(s, a, 5.0, 0.0);
  CHECK(out.s_next(2) == 0.0);
  CHECK(out.s_next(3) == 0.0);
  Vec a2(2);
  a2 << -4.0, 0.0;
  CHECK(puck_step(s, a2, 5.0, 0.0).s_next(2) != 0.0);
}

TEST_CASE("puck action clipping and reward accounting") {
  Vec s = Vec::Zero(4);
  Vec big(2);
  big << 50.0, 0.0;
  StepOut out = puck_step(s, big, 0.0, 0.0);
  Vec capped(2);
  capped << 10.0, 0.0;
  StepOut ref = puck_step(s, capped, 0.0, 0.0);
  CHECK(out.s_next.cwiseEqual(ref.s_next).all());
  CHECK(out.r_true == ref.r_true);
}

TEST_CASE("puck kinetic energy decreases under pure friction") {
  rng::Stream rs(11);
  Vec s(4);
  s << 0.0, 0.0, rs.uniform(0.5, 3.0), rs.uniform(-3.0, -0.5);
  double ke = s(2) * s(2) + s(3) * s(3);
  for (int t = 0; t < 100; ++t) {
    s = puck_step(s, Vec::Zero(2), 0.0, 2.5).s_next;
    double ke2 = s(2) * s(2) + s(3) * s(3);
    CHECK(ke2 < ke);
    ke = ke2;
  }
}

TEST_CASE("puck horizon termination") {
  const EnvFamily& pk = EnvFamily::get("puck");
  Env e = generate_env(pk, pk.source_params());
  e.reset(std::uint64_t{5});
  for (int t = 0; t < 100; ++t) {
    StepOut out = e.step(Vec::Zero(2));
    CHECK(out.done == (t == 99));
  }
  CHECK(e.done());
}

TEST_CASE("sample_dynamics stays in range and honors blackout") {
  const EnvFamily& pk = EnvFamily::get("puck");
  rng::Stream rs(21);
  for (int i = 0; i < 500; ++i) {
    DynParams c = sample_dynamics(pk, rs);
    CHECK(pk.in_range(c.values));
  }

  GridSpec grid = pk.default_grid(13);
  BlackoutMask mask = blackout_region(grid, 5, pk.source_cell(grid));
  CHECK(mask.count() == 25);
  for (int i = 0; i < 10000; ++i) {
    DynParams c = sample_dynamics(pk, rs, &mask);
    CHECK(!mask.value_masked(c.values));
  }

  BlackoutMask all{grid, std::vector<char>(grid.total_cells(), 1)};
  CHECK_THROWS_AS(sample_dynamics(pk, rs, &all), std::invalid_argument);
}

TEST_CASE("blackout regions nest and stay centered") {
  const EnvFamily& pk = EnvFamily::get("puck");
  GridSpec grid = pk.default_grid(13);
  auto center = pk.source_cell(grid);
  CHECK(center[0] == 6);
  CHECK(center[1] == 3);
  BlackoutMask m1 = blackout_region(grid, 1, center);
  BlackoutMask m3 = blackout_region(grid, 3, center);
  BlackoutMask m5 = blackout_region(grid, 5, center);
  CHECK(m1.count() == 1);
  CHECK(m3.count() == 9);
  CHECK(m5.count() == 25);
  CHECK(m1.cell_masked(grid.flat(center)));
  for (int f = 0; f < grid.total_cells(); ++f) {
    if (m3.cell_masked(f)) CHECK(m5.cell_masked(f));
    if (m1.cell_masked(f)) CHECK(m3.cell_masked(f));
  }
  // a 5x5 region centered on the cartpole source cell falls off the grid
  const EnvFamily& cp = EnvFamily::get("cartpole");
  GridSpec cg = cp.default_grid(13);
  CHECK_THROWS_AS(blackout_region(cg, 5, cp.source_cell(cg)),
                  std::invalid_argument);
}

TEST_CASE("poisoned reward only contaminates r_true") {
  const EnvFamily& pk = EnvFamily::get("puck");
  Env e = generate_env(pk, pk.source_params());
  e.poison_true_reward(true);
  e.reset(std::uint64_t{1});
  StepOut out = e.step(Vec::Ones(2));
  CHECK(std::isnan(out.r_true));
  CHECK(out.s_next.allFinite());
}

TEST_CASE("demo files round trip without any reward column") {
  rng::Stream rs(31);
  const EnvFamily& cp = EnvFamily::get("cartpole");
  DemoSet d;
  d.family_id = cp.family_id;
  d.source_values = cp.source_values;
  d.obs_dim = cp.obs_dim;
  d.act_dim = cp.act_dim;
  d.obs_norm = Normalizer::identity(4);
  d.obs_norm.mean(1) = 0.125;
  d.episodes.resize(2);
  for (int ep = 0; ep < 2; ++ep)
    for (int t = 0; t < 3; ++t) {
      Transition tr;
      tr.s = Vec::Random(4);
      tr.a = Vec::Constant(1, static_cast<double>(rs.uniform_int(2)));
      tr.s_next = Vec::Random(4);
      tr.done = t == 2;
      d.episodes[ep].push_back(tr);
    }

  std::string path = "/tmp/adail_test_demos.txt";
  write_demos(path, d);

  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header.find("family=cartpole") != std::string::npos);
  CHECK(header.find("episodes=2") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 6);

  DemoSet back = read_demos(path);
  CHECK(back.family_id == d.family_id);
  CHECK(back.obs_norm.mean(1) == 0.125);
  REQUIRE(back.episodes.size() == 2);
  for (int ep = 0; ep < 2; ++ep) {
    REQUIRE(back.episodes[ep].size() == 3);
    for (int t = 0; t < 3; ++t) {
      CHECK(back.episodes[ep][t].s.cwiseEqual(d.episodes[ep][t].s).all());
      CHECK(back.episodes[ep][t].a.cwiseEqual(d.episodes[ep][t].a).all());
      CHECK(back.episodes[ep][t].s_next.cwiseEqual(d.episodes[ep][t].s_next).all());
      CHECK(back.episodes[ep][t].done == d.episodes[ep][t].done);
    }
  }
  std::remove(path.c_str());
}
