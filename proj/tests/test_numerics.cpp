#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "stain/autograd.hpp"
#include "stain/error.hpp"
#include "stain/kernels.hpp"

using namespace stain::numerics;
using stain::SplitMix64;

TEST_CASE("tensor rejects inconsistent shapes") {
  CHECK_THROWS_AS(Tensor(Shape{}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{1, 2, 3, 4, 5}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
}

TEST_CASE("conv2d") {
  SUBCASE("zero input yields the bias") {
    SplitMix64 rng(1);
    Tensor k = oracle::random_tensor(rng, {3, 2, 2, 2});
    Tensor b({3}, std::vector<double>{0.5, -1.0, 2.0});
    Tensor out = conv2d(Tensor({2, 4, 5}), k, b);
    CHECK(out.shape() == Shape{3, 3, 4});
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < 12; ++i) CHECK(out[o * 12 + i] == b[o]);
  }
  SUBCASE("hand correlation") {
    Tensor in({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor k({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 1});
    Tensor out = conv2d(in, k, Tensor({1}));
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == 5.0);
  }
  SUBCASE("matches loop oracle on 1x5x5") {
    SplitMix64 rng(7);
    Tensor in = oracle::random_tensor(rng, {1, 5, 5});
    Tensor k = oracle::random_tensor(rng, {2, 1, 2, 2});
    Tensor b = oracle::random_tensor(rng, {2});
    CHECK(oracle::max_abs_diff(conv2d(in, k, b), oracle::conv2d(in, k, b)) <= 1e-12);
  }
  SUBCASE("shape errors name the axis") {
    Tensor in({2, 4, 4});
    try {
      conv2d(in, Tensor({1, 3, 2, 2}), Tensor({1}));
      FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("in_channels") != std::string::npos);
    }
    CHECK_THROWS_AS(conv2d(Tensor({1, 1, 4}), Tensor({1, 1, 2, 2}), Tensor({1})), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(in, Tensor({2, 2, 2, 2}), Tensor({3})), std::invalid_argument);
  }
}

TEST_CASE("maxpool2d") {
  Tensor in({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(maxpool2d(in)[0] == 4.0);

  SUBCASE("ties route gradient to the first window element") {
    Tape tape;
    Parameter p("x", Tensor({1, 4, 4}, 3.0));
    Var x = tape.parameter(p);
    Var y = maxpool2d(x);
    CHECK(y.value().shape() == Shape{1, 2, 2});
    for (double v : y.value().data()) CHECK(v == 3.0);
    Var s = oracle::project(y, 3);
    tape.backward(s);
    for (std::size_t yy = 0; yy < 4; ++yy)
      for (std::size_t xx = 0; xx < 4; ++xx) {
        const bool corner = yy % 2 == 0 && xx % 2 == 0;
        if (!corner) CHECK(p.grad.at(0, yy, xx) == 0.0);
        else CHECK(p.grad.at(0, yy, xx) != 0.0);
      }
  }
  SUBCASE("odd extents drop the trailing row and column") {
    SplitMix64 rng(11);
    Tensor r = oracle::random_tensor(rng, {1, 5, 5});
    Tensor out = maxpool2d(r);
    CHECK(out.shape() == Shape{1, 2, 2});
    CHECK(oracle::max_abs_diff(out, oracle::maxpool2d(r)) <= 1e-12);
  }
  CHECK_THROWS_AS(maxpool2d(Tensor({1, 1, 4})), std::invalid_argument);
  CHECK_THROWS_AS(maxpool2d(Tensor({1, 4, 1})), std::invalid_argument);
}

TEST_CASE("dense") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Tensor x({3}, std::vector<double>{0.25, -2.0, 7.0});
  CHECK(dense(x, eye, Tensor({3})) == x);

  Tensor w({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor out = dense(Tensor({2}, 1.0), w, Tensor({2}, std::vector<double>{0, 1}));
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 8.0);

  Tensor b({2}, std::vector<double>{-0.5, 0.5});
  CHECK(dense(Tensor({2}), w, b) == b);
  CHECK_THROWS_AS(dense(Tensor({3}), w, b), std::invalid_argument);
}

TEST_CASE("activations") {
  Tensor r = activation(Tensor({3}, std::vector<double>{-1, 0, 2}), Activation::relu);
  CHECK(r == Tensor({3}, std::vector<double>{0, 0, 2}));
  CHECK(sigmoid(0.0) == 0.5);
  for (double x : {-1e6, -800.0, -40.0, 40.0, 800.0, 1e6}) {
    CHECK(sigmoid(x) > 0.0);
    CHECK(sigmoid(x) < 1.0);
  }
  SUBCASE("tanh derivative against finite differences") {
    Tape tape;
    Parameter p("x", Tensor({1}, 0.3));
    Var y = stain::numerics::tanh(tape.parameter(p));
    tape.backward(y);
    const double h = 1e-5;
    const double fd = (std::tanh(0.3 + h) - std::tanh(0.3 - h)) / (2 * h);
    CHECK(std::abs(p.grad[0] - fd) / std::abs(fd) < 1e-6);
  }
}

TEST_CASE("concat_channels") {
  Tensor a({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor b({1, 2, 2}, std::vector<double>{5, 6, 7, 8});
  Tensor c = concat_channels(a, b);
  CHECK(c.shape() == Shape{2, 2, 2});
  CHECK(slice_channels(c, 0, 1) == a);
  CHECK(slice_channels(concat_channels(a, Tensor({3, 2, 2})), 0, 1) == a);
  CHECK_THROWS_AS(concat_channels(a, Tensor({1, 2, 3})), std::invalid_argument);

  Tape tape;
  Parameter pa("a", a), pb("b", b);
  Var cat = concat_channels(tape.parameter(pa), tape.parameter(pb));
  Var sum = matvec(tape.constant(Tensor({1, 8}, 1.0)), reshape(cat, {8}));
  tape.backward(sum);
  for (double g : pa.grad.data()) CHECK(g == 1.0);
}

TEST_CASE("bce_loss") {
  CHECK(bce_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(1.0, 1) < 1e-6);
  CHECK(bce_loss(0.9, 0) == doctest::Approx(-std::log(0.1)).epsilon(1e-12));
  CHECK(std::isfinite(bce_loss(0.0, 1)));
  CHECK(bce_loss(0.3, 0) >= 0.0);
}

TEST_CASE("backward") {
  SUBCASE("sigmoid(w*x) at w=0") {
    Tape tape;
    Parameter w("w", Tensor({1, 1}, 0.0));
    Var y = sigmoid(matvec(tape.parameter(w), tape.constant(Tensor({1}, 1.0))));
    tape.backward(y);
    CHECK(w.grad[0] == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("detached parameter keeps a zero gradient") {
    Tape tape;
    Parameter used("used", Tensor({1, 1}, 0.4)), unused("unused", Tensor({2}, 1.0));
    tape.parameter(unused);
    Var y = sigmoid(matvec(tape.parameter(used), tape.constant(Tensor({1}, 2.0))));
    tape.backward(y);
    CHECK(unused.grad == Tensor({2}));
    CHECK(used.grad[0] != 0.0);
  }
  SUBCASE("gradients accumulate additively across uses") {
    Tape tape;
    Parameter p("p", Tensor({1}, 2.0));
    Var a = tape.parameter(p);
    Var y = add(a, a);
    tape.backward(y);
    CHECK(p.grad[0] == 2.0);
  }
}

TEST_CASE("primitive gradients match central differences") {
  SplitMix64 rng(2024);
  auto check = [](std::vector<Parameter*> ps, const std::function<Var(Tape&)>& f) {
    const auto r = oracle::grad_check(std::move(ps), f);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-4);
  };
  Parameter x3("x", oracle::random_tensor(rng, {2, 5, 6}));
  Parameter k("k", oracle::random_tensor(rng, {3, 2, 2, 2}));
  Parameter b("b", oracle::random_tensor(rng, {3}));
  SUBCASE("conv2d") {
    check({&x3, &k, &b}, [&](Tape& t) {
      return oracle::project(conv2d(t.parameter(x3), t.parameter(k), t.parameter(b)), 1);
    });
  }
  SUBCASE("conv_transpose2d") {
    check({&x3, &k, &b}, [&](Tape& t) {
      return oracle::project(conv_transpose2d(t.parameter(x3), t.parameter(k), t.parameter(b)), 2);
    });
  }
  SUBCASE("maxpool2d") {
    check({&x3}, [&](Tape& t) { return oracle::project(maxpool2d(t.parameter(x3)), 3); });
  }
  SUBCASE("dense") {
    Parameter w("w", oracle::random_tensor(rng, {4, 6})), v("v", oracle::random_tensor(rng, {6})),
        bb("bb", oracle::random_tensor(rng, {4}));
    check({&w, &v, &bb}, [&](Tape& t) {
      return oracle::project(dense(t.parameter(v), t.parameter(w), t.parameter(bb)), 4);
    });
  }
  SUBCASE("activations") {
    for (auto kind : {Activation::relu, Activation::sigmoid, Activation::tanh}) {
      check({&x3}, [&](Tape& t) { return oracle::project(activation(t.parameter(x3), kind), 5); });
    }
  }
  SUBCASE("channel plumbing") {
    Parameter y3("y", oracle::random_tensor(rng, {1, 5, 6}));
    check({&x3, &y3}, [&](Tape& t) {
      Var c = concat_channels(t.parameter(x3), t.parameter(y3));
      Var m = channel_mean(c);
      Var u = upsample_nearest2x(m);
      Var cp = crop_pad(u, 7, 14);
      return add(oracle::project(cp, 6), oracle::project(slice_channels(c, 1, 2), 7));
    });
  }
  SUBCASE("max_of and bce") {
    Parameter s("s", oracle::random_tensor(rng, {3}));
    check({&s}, [&](Tape& t) {
      Var v = t.parameter(s);
      std::vector<Var> items;
      for (std::size_t i = 0; i < 3; ++i) items.push_back(sigmoid(slice_channels(reshape(v, {3, 1, 1}), i, 1)));
      std::vector<Var> flat;
      for (Var it : items) flat.push_back(reshape(it, {1}));
      return bce_loss(max_of(flat), 1);
    });
  }
}

TEST_CASE("sgd_step") {
  SUBCASE("plain step") {
    std::vector<Parameter> ps{Parameter("w", Tensor({1}, 1.0))};
    ps[0].grad[0] = 1.0;
    sgd_step(ps, 0.1, 0.0);
    CHECK(ps[0].value[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(ps[0].grad[0] == 0.0);
  }
  SUBCASE("zero gradient leaves value unchanged") {
    std::vector<Parameter> ps{Parameter("w", Tensor({2}, 0.7))};
    sgd_step(ps, 0.5, 0.9);
    CHECK(ps[0].value == Tensor({2}, 0.7));
  }
  SUBCASE("momentum recurrence") {
    const double g = 0.3;
    std::vector<Parameter> ps{Parameter("w", Tensor({1}, 5.0))};
    ps[0].grad[0] = g;
    sgd_step(ps, 1.0, 0.9);
    CHECK(ps[0].value[0] == doctest::Approx(5.0 - g).epsilon(1e-14));
    ps[0].grad[0] = g;
    sgd_step(ps, 1.0, 0.9);
    CHECK(ps[0].value[0] == doctest::Approx(5.0 - g - 1.9 * g).epsilon(1e-14));
  }
  SUBCASE("non-finite gradient aborts without touching values") {
    std::vector<Parameter> ps{Parameter("first", Tensor({1}, 1.0)), Parameter("second", Tensor({1}, 1.0))};
    ps[0].grad[0] = 1.0;
    ps[1].grad[0] = NAN;
    try {
      sgd_step(ps, 0.1, 0.0);
      FAIL("expected throw");
    } catch (const stain::NumericError& e) {
      CHECK(std::string(e.what()).find("second") != std::string::npos);
    }
    CHECK(ps[0].value[0] == 1.0);
  }
}

TEST_CASE("determinism: identical inputs give bit-identical outputs and gradients") {
  auto run = [] {
    SplitMix64 rng(99);
    Parameter x("x", oracle::random_tensor(rng, {2, 6, 6}));
    Parameter k("k", oracle::random_tensor(rng, {4, 2, 2, 2}));
    Parameter b("b", oracle::random_tensor(rng, {4}));
    Tape t;
    Var y = oracle::project(relu(maxpool2d(conv2d(t.parameter(x), t.parameter(k), t.parameter(b)))), 5);
    t.backward(y);
    return std::make_pair(y.scalar(), k.grad);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
