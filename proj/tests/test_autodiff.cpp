#include <catch2/catch_amalgamated.hpp>

#include "adail/check.hpp"
#include "adail/net.hpp"
#include "adail/tensor.hpp"

using namespace adail;

TEST_CASE("backward of x squared") {
  Graph g;
  Node* x = g.leaf("x", Mat::Constant(1, 1, 3.0));
  GradMap gm = g.backward(g.square(x));
  CHECK(gm["x"](0, 0) == Catch::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Graph g;
  Node* x = g.leaf("x", Mat::Ones(2, 2));
  CHECK_THROWS_AS(g.backward(g.square(x)), std::invalid_argument);
}

TEST_CASE("unreachable parameters get zero gradients") {
  Graph g;
  Node* x = g.leaf("x", Mat::Constant(1, 1, 2.0));
  g.leaf("y", Mat::Constant(1, 3, 5.0));
  GradMap gm = g.backward(g.square(x));
  CHECK(gm.at("y").isZero());
  CHECK(gm.at("x")(0, 0) == Catch::Approx(4.0));
}

TEST_CASE("sum of tanh matches finite differences") {
  rng::Stream rs(7);
  ParamNet net;
  init_mlp(net, "f.", {3, 5, 2}, rs);
  Mat x = checks::random_mat(4, 3, rs);
  auto build = [&x](Graph& g, const ParamNet& n) {
    return g.sum(g.tanh_(mlp_forward(g, n, "f.", g.constant(x))));
  };
  Graph g;
  GradMap an = g.backward(build(g, net));
  FdReport rep = fd_check(
      net,
      [&build](const ParamNet& n) {
        Graph gg;
        return build(gg, n)->value(0, 0);
      },
      an);
  CHECK(rep.max_err < 1e-4);
}

TEST_CASE("separate backwards equal the backward of the summed loss") {
  rng::Stream rs(11);
  ParamNet net;
  init_mlp(net, "f.", {2, 4, 1}, rs);
  init_mlp(net, "h.", {2, 3, 1}, rs);
  Mat x = checks::random_mat(3, 2, rs);

  Graph g1;
  GradMap a = g1.backward(g1.mean(g1.square(mlp_forward(g1, net, "f.", g1.constant(x)))));
  Graph g2;
  GradMap b = g2.backward(g2.mean(g2.square(mlp_forward(g2, net, "h.", g2.constant(x)))));
  Graph g3;
  Node* joint =
      g3.add(g3.mean(g3.square(mlp_forward(g3, net, "f.", g3.constant(x)))),
             g3.mean(g3.square(mlp_forward(g3, net, "h.", g3.constant(x)))));
  GradMap ab = g3.backward(joint);

  for (auto& [name, grad] : ab) {
    Mat separate = a.count(name) && !a[name].isZero() ? a[name] : b[name];
    CHECK((grad - separate).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gradient reversal node") {
  SECTION("forward is the identity") {
    Graph g;
    Mat v(1, 2);
    v << 1.0, -2.0;
    Node* y = g.grl(g.leaf("x", v), 1.0);
    CHECK(y->value.cwiseEqual(v).all());
  }
  SECTION("backward multiplies by -lambda") {
    Mat up(1, 2);
    up << 3.0, -1.0;
    Graph g;
    Node* x = g.leaf("x", Mat::Zero(1, 2));
    GradMap gm = g.backward(g.sum(g.mul(g.grl(x, 1.0), g.constant(up))));
    CHECK(gm["x"](0, 0) == -3.0);
    CHECK(gm["x"](0, 1) == 1.0);

    Mat up2(1, 2);
    up2 << 2.0, -4.0;
    Graph g2;
    Node* x2 = g2.leaf("x", Mat::Zero(1, 2));
    GradMap gm2 = g2.backward(g2.sum(g2.mul(g2.grl(x2, 0.5), g2.constant(up2))));
    CHECK(gm2["x"](0, 0) == -1.0);
    CHECK(gm2["x"](0, 1) == 2.0);
  }
  SECTION("double reversal with lambda 1 restores the gradient") {
    rng::Stream rs(3);
    Mat v = checks::random_mat(2, 3, rs);
    Graph g;
    Node* x = g.leaf("x", v);
    GradMap with = g.backward(g.sum(g.square(g.grl(g.grl(x, 1.0), 1.0))));
    Graph g2;
    Node* x2 = g2.leaf("x", v);
    GradMap without = g2.backward(g2.sum(g2.square(x2)));
    CHECK((with["x"] - without["x"]).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("negative lambda rejected") {
    Graph g;
    CHECK_THROWS_AS(g.grl(g.constant(Mat::Zero(1, 1)), -0.5), std::invalid_argument);
  }
}

TEST_CASE("graph op value checks") {
  Graph g;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  CHECK(g.matmul(g.constant(a), g.constant(b))->value(0, 0) == 19.0);
  CHECK(g.emin(g.constant(a), g.constant(b))->value(1, 1) == 4.0);
  CHECK(g.clip(g.constant(a), 2.0, 3.0)->value(0, 0) == 2.0);
  CHECK(g.row_sum(g.constant(a))->value(1, 0) == 7.0);
  CHECK(g.mean(g.constant(a))->value(0, 0) == 2.5);
  CHECK_THROWS_AS(g.matmul(g.constant(a), g.constant(Mat::Zero(3, 2))),
                  std::invalid_argument);
}

TEST_CASE("full gradient suite stays under tolerance") {
  CheckResult r = checks::gradient_suite(1234, 6);
  INFO(r.detail);
  CHECK(r.passed);
}
