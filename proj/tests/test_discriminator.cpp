#include <catch2/catch_amalgamated.hpp>

#include "adail/check.hpp"
#include "adail/discriminator.hpp"

using namespace adail;

namespace {

Discriminator make_disc(const std::string& family, double lambda, double lr,
                        std::uint64_t seed, bool state_only = false) {
  rng::Stream rs(seed);
  const EnvFamily& fam = EnvFamily::get(family);
  return Discriminator::make(fam, Normalizer::identity(fam.obs_dim), {32, 32},
                             lambda, 0.0, 10.0, state_only, lr, rs);
}

}  // namespace

TEST_CASE("zero-weight discriminator outputs one half everywhere") {
  Discriminator d = make_disc("cartpole", 1.0, 1e-3, 1);
  for (auto& e : d.net.entries) e.second.setZero();
  rng::Stream rs(2);
  for (int i = 0; i < 20; ++i) {
    Vec s = checks::random_mat(4, 1, rs).col(0);
    Vec a = Vec::Constant(1, rs.uniform_int(2));
    auto [p, c] = d.forward(s, a, s);
    CHECK(p == 0.5);
    CHECK(c.size() == 1);
  }
}

TEST_CASE("regression head width follows the family parameter count") {
  CHECK(make_disc("cartpole", 1.0, 1e-3, 3).forward(Vec::Zero(4),
                                                    Vec::Zero(1), Vec::Zero(4))
            .second.size() == 1);
  CHECK(make_disc("puck", 1.0, 1e-3, 3).forward(Vec::Zero(4), Vec::Zero(2),
                                                Vec::Zero(4))
            .second.size() == 2);
}

TEST_CASE("forward is a pure function") {
  Discriminator d = make_disc("puck", 1.0, 1e-3, 5);
  Vec s = Vec::Ones(4), a = Vec::Constant(2, 0.3);
  auto r1 = d.forward(s, a, s);
  auto r2 = d.forward(s, a, s);
  CHECK(r1.first == r2.first);
  CHECK(r1.second.cwiseEqual(r2.second).all());
}

TEST_CASE("state-only trunk consumes s and s_next") {
  Discriminator d = make_disc("puck", 1.0, 1e-3, 7, true);
  CHECK(d.input_width() == 8);
  Discriminator d2 = make_disc("puck", 1.0, 1e-3, 7, false);
  CHECK(d2.input_width() == 6);
}

TEST_CASE("balanced zero-weight update starts at ln 2") {
  Discriminator d = make_disc("cartpole", 1.0, 1e-3, 9);
  for (auto& e : d.net.entries) e.second.setZero();
  rng::Stream rs(10);
  Mat x = checks::random_mat(16, d.input_width(), rs);
  DiscDiag diag = d.update_cls(x, x);
  CHECK(diag.loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("identical batches keep accuracy at one half and loss near ln 2") {
  Discriminator d = make_disc("cartpole", 1.0, 1e-2, 11);
  rng::Stream rs(12);
  Mat x = checks::random_mat(64, d.input_width(), rs);
  DiscDiag diag;
  for (int step = 0; step < 100; ++step) diag = d.update_cls(x, x);
  CHECK(diag.accuracy == 0.5);
  CHECK(diag.loss == Catch::Approx(std::log(2.0)).margin(0.05));
}

TEST_CASE("linearly separable blobs reach accuracy one within 200 steps") {
  Discriminator d = make_disc("puck", 1.0, 1e-2, 13);
  rng::Stream rs(14);
  int n = 64;
  Mat pol(n, d.input_width()), exp(n, d.input_width());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d.input_width(); ++j) {
      pol(i, j) = -1.0 + 0.3 * rs.uniform(-1.0, 1.0);
      exp(i, j) = 1.0 + 0.3 * rs.uniform(-1.0, 1.0);
    }
  double acc = 0.0;
  for (int step = 0; step < 200; ++step) acc = d.update_cls(pol, exp).accuracy;
  CHECK(acc == 1.0);
}

TEST_CASE("imitation reward mapping") {
  CHECK(imitation_reward_from_p(0.5) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(imitation_reward_from_p(0.0) == 0.0);
  CHECK(imitation_reward_from_p(1.0 - 1e-12) == 10.0);
  // monotone in p and bounded by the clip range
  double prev = -1.0;
  for (double p = 0.0; p <= 0.999; p += 0.001) {
    double r = imitation_reward_from_p(p);
    CHECK(r >= prev);
    CHECK(r >= 0.0);
    CHECK(r <= 10.0);
    prev = r;
  }
  // the network-facing path agrees with the analytic map at zero weights
  Discriminator d = make_disc("cartpole", 1.0, 1e-3, 15);
  for (auto& e : d.net.entries) e.second.setZero();
  CHECK(d.reward(Vec::Zero(4), Vec::Zero(1), Vec::Zero(4)) ==
        Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("grl equivalence on the regression update") {
  rng::Stream rs(16);
  for (double lambda : {0.0, 0.5, 1.0}) {
    Discriminator d = make_disc("puck", lambda, 1e-3, 17);
    Mat x = checks::random_mat(32, d.input_width(), rs);
    Mat c = checks::random_mat(32, 2, rs);
    GradMap with = d.reg_grads(x, c, true);
    GradMap without = d.reg_grads(x, c, false);
    for (auto& [name, g] : with) {
      if (name.rfind("trunk.", 0) == 0)
        CHECK((g + lambda * without[name]).cwiseAbs().maxCoeff() <= 1e-10);
      else
        CHECK((g - without[name]).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("lambda zero regression update leaves the trunk untouched") {
  Discriminator d = make_disc("puck", 0.0, 1e-2, 19);
  rng::Stream rs(20);
  Mat x = checks::random_mat(32, d.input_width(), rs);
  Mat c = checks::random_mat(32, 2, rs);
  Mat trunk_before = d.net.at("trunk.w0");
  Mat reg_before = d.net.at("reg.w0");
  d.update_reg(x, c);
  CHECK(d.net.at("trunk.w0").cwiseEqual(trunk_before).all());
  CHECK(!d.net.at("reg.w0").cwiseEqual(reg_before).all());
}

TEST_CASE("head updates do not cross-contaminate") {
  Discriminator d = make_disc("puck", 1.0, 1e-2, 21);
  rng::Stream rs(22);
  Mat x = checks::random_mat(16, d.input_width(), rs);
  Mat c = checks::random_mat(16, 2, rs);

  Mat reg_w = d.net.at("reg.w0"), reg_b = d.net.at("reg.b0");
  d.update_cls(x, checks::random_mat(16, d.input_width(), rs));
  CHECK(d.net.at("reg.w0").cwiseEqual(reg_w).all());
  CHECK(d.net.at("reg.b0").cwiseEqual(reg_b).all());

  Mat cls_w = d.net.at("cls.w0"), cls_b = d.net.at("cls.b0");
  d.update_reg(x, c);
  CHECK(d.net.at("cls.w0").cwiseEqual(cls_w).all());
  CHECK(d.net.at("cls.b0").cwiseEqual(cls_b).all());
}

TEST_CASE("with a frozen trunk the classifier ignores the regression head") {
  Discriminator d = make_disc("puck", 1.0, 1e-2, 23);
  rng::Stream rs(24);
  Mat pol = checks::random_mat(32, d.input_width(), rs);
  Mat exp = checks::random_mat(32, d.input_width(), rs).array() + 1.5;
  for (int step = 0; step < 50; ++step) d.update_cls(pol, exp);

  Mat held_pol = checks::random_mat(32, d.input_width(), rs);
  Mat held_exp = checks::random_mat(32, d.input_width(), rs).array() + 1.5;
  auto accuracy = [&](const Discriminator& disc) {
    int correct = 0;
    Mat fp = mlp_apply_batch(disc.net, "cls.", disc.features(held_pol));
    Mat fe = mlp_apply_batch(disc.net, "cls.", disc.features(held_exp));
    for (int i = 0; i < fp.rows(); ++i) correct += fp(i, 0) <= 0.0;
    for (int i = 0; i < fe.rows(); ++i) correct += fe(i, 0) > 0.0;
    return correct;
  };
  int before = accuracy(d);
  rng::Stream reinit(99);
  Discriminator fresh = make_disc("puck", 1.0, 1e-2, 99);
  d.net.at("reg.w0") = fresh.net.at("reg.w0");
  d.net.at("reg.b0") = fresh.net.at("reg.b0");
  CHECK(accuracy(d) == before);
}

TEST_CASE("regression head converges on a constant label") {
  Discriminator d = make_disc("puck", 1.0, 3e-3, 25);
  rng::Stream rs(26);
  Mat x = checks::random_mat(64, d.input_width(), rs);
  Mat c(64, 2);
  for (int i = 0; i < 64; ++i) {
    c(i, 0) = 0.7;
    c(i, 1) = -0.4;
  }
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 400; ++step) {
    DiscDiag diag = d.update_reg(x, c);
    if (step == 0) first = diag.reg_mse;
    last = diag.reg_mse;
  }
  CHECK(last < 0.1 * first);
  Mat pred = mlp_apply_batch(d.net, "reg.", d.features(x));
  CHECK(std::abs(pred.col(0).mean() - 0.7) < 0.2);
  CHECK(std::abs(pred.col(1).mean() + 0.4) < 0.2);
}

TEST_CASE("empty and mislabeled batches are rejected") {
  Discriminator d = make_disc("puck", 1.0, 1e-3, 27);
  rng::Stream rs(28);
  Mat x = checks::random_mat(8, d.input_width(), rs);
  CHECK_THROWS_AS(d.update_cls(Mat(0, d.input_width()), x), std::invalid_argument);
  CHECK_THROWS_AS(d.update_reg(x, Mat(8, 1)), std::invalid_argument);
}
