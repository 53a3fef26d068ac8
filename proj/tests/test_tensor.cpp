#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "courant/tensor.hpp"
#include "support/testutil.hpp"

using namespace courant;
using courant::testing::check_gradients;
using courant::testing::named;

TEST_CASE("matmul identity and projector") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor r = matmul(eye, a);
  CHECK(r.data()[0] == 1.0);
  CHECK(r.data()[1] == 2.0);
  CHECK(r.data()[2] == 3.0);
  CHECK(r.data()[3] == 4.0);

  const Tensor proj = Tensor::from({2, 2}, {1, 0, 0, 0});
  const Tensor v = Tensor::from({2, 1}, {5, 7});
  const Tensor p = matmul(proj, v);
  CHECK(p.data()[0] == 5.0);
  CHECK(p.data()[1] == 0.0);

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul gradient of sum equals ones times b^T") {
  std::mt19937_64 rng(7);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
  {
    Tape tape;
    const Tensor loss = sum(matmul(a, b));
    tape.backward(loss);
  }
  // d(sum(AB))/dA = ones(3,2) B^T
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 4; ++j) {
      double expect = 0.0;
      for (std::int64_t c = 0; c < 2; ++c) expect += b.at(j, c);
      CHECK(a.grad()[static_cast<std::size_t>(i * 4 + j)] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  const auto rep = check_gradients(named({{"a", a}, {"b", b}}),
                                   [&] { return sum(matmul(a, b)); });
  CHECK(rep.max_rel < 1e-6);
}

TEST_CASE("softmax values") {
  const Tensor z = softmax(Tensor::from({1, 3}, {0, 0, 0}), 1);
  for (double v : z.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const Tensor sat = softmax(Tensor::from({1, 2}, {1000, 0}), 1);
  CHECK(std::abs(sat.data()[0] - 1.0) < 1e-12);
  CHECK(std::abs(sat.data()[1]) < 1e-12);

  const Tensor s = softmax(Tensor::from({1, 3}, {1, 2, 3}), 1);
  CHECK(s.data()[0] == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(s.data()[1] == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(s.data()[2] == doctest::Approx(0.66524096).epsilon(1e-7));

  CHECK_THROWS_AS(softmax(Tensor::from({1, 2}, {std::nan(""), 0.0}), 1), NumericError);
}

TEST_CASE("softmax rows form a probability simplex along the chosen axis") {
  std::mt19937_64 rng(11);
  for (int axis = 0; axis < 2; ++axis) {
    const Tensor x = Tensor::randn({5, 7}, rng, 3.0);
    const Tensor s = softmax(x, axis);
    const std::int64_t outer = axis == 0 ? 7 : 5;
    const std::int64_t len = axis == 0 ? 5 : 7;
    for (std::int64_t o = 0; o < outer; ++o) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < len; ++i)
        acc += axis == 0 ? s.at(i, o) : s.at(o, i);
      CHECK(std::abs(acc - 1.0) < 1e-12);
    }
    for (double v : s.data()) CHECK(v > 0.0);
  }
}

TEST_CASE("layernorm values") {
  const Tensor gain = Tensor::full({3}, 1.0);
  const Tensor bias = Tensor::zeros({3});
  const Tensor c = layernorm(Tensor::from({1, 3}, {5, 5, 5}), gain, bias);
  for (double v : c.data()) CHECK(std::abs(v) < 1e-12);

  const Tensor g2 = Tensor::full({2}, 1.0);
  const Tensor b2 = Tensor::zeros({2});
  const Tensor u = layernorm(Tensor::from({1, 2}, {1, -1}), g2, b2);
  CHECK(u.data()[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(u.data()[1] == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(3);
  Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
  {
    Tape tape;
    tape.backward(sum(x));
  }
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  {
    Tape tape;
    tape.backward(scale(sum(mul(x, x)), 0.5));
  }
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[static_cast<std::size_t>(i)] ==
          doctest::Approx(x.data()[static_cast<std::size_t>(i)]).epsilon(1e-12));

  // repeated backward without reset accumulates
  x.zero_grad();
  {
    Tape tape;
    const Tensor loss = sum(x);
    tape.backward(loss);
    tape.backward(loss);
  }
  for (double g : x.grad()) CHECK(g == doctest::Approx(3.0).epsilon(1e-12));  // 1 + 2

  {
    Tape tape;
    const Tensor ns = mul(x, x);
    CHECK_THROWS_AS(tape.backward(ns), ContractError);
  }
}

TEST_CASE("every op matches central finite differences") {
  std::mt19937_64 rng(42);
  const double tol = 1e-4;

  auto fd_unary = [&](auto op, const char* name, double scale_in = 1.0) {
    Tensor x = Tensor::randn({3, 4}, rng, scale_in, true);
    const auto rep =
        check_gradients(named({{name, x}}), [&, op] { return mean(op(x)); });
    INFO(name, " worst=", rep.worst);
    CHECK(rep.max_rel < tol);
  };
  fd_unary([](const Tensor& t) { return gelu(t); }, "gelu");
  fd_unary([](const Tensor& t) { return courant::cos(t); }, "cos");
  fd_unary([](const Tensor& t) { return courant::sin(t); }, "sin");
  fd_unary([](const Tensor& t) { return courant::exp(t); }, "exp", 0.5);
  fd_unary([](const Tensor& t) { return softplus(t); }, "softplus");
  fd_unary([](const Tensor& t) { return square(t); }, "square");
  fd_unary([](const Tensor& t) { return transpose(t); }, "transpose");
  fd_unary([](const Tensor& t) { return softmax(t, 1); }, "softmax");
  fd_unary([](const Tensor& t) { return slice_cols(t, 1, 3); }, "slice_cols");
  fd_unary([](const Tensor& t) { return slice_rows(t, 0, 2); }, "slice_rows");

  {
    Tensor x = Tensor::randn({3, 4}, rng, 1.0, true);
    x.data()[0] = 2.0;  // keep reciprocal away from zero
    const auto rep = check_gradients(
        named({{"reciprocal", x}}),
        [&] { return mean(reciprocal(add(mul(x, x), Tensor::full({3, 4}, 1.0)))); });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({3, 4}, rng, 1.0, true);
    const auto rep = check_gradients(named({{"a", a}, {"b", b}}), [&] {
      return mean(add(mul(a, b), sub(a, scale(b, 0.7))));
    });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor bias = Tensor::randn({4}, rng, 1.0, true);
    const auto rep = check_gradients(named({{"a", a}, {"bias", bias}}),
                                     [&] { return mean(add_bias(a, bias)); });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor v = Tensor::randn({5}, rng, 1.0, true);
    const auto rep = check_gradients(named({{"v", v}}),
                                     [&] { return mean(square(broadcast_row(v, 3))); });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor s = Tensor::scalar(0.8, true);
    const auto rep = check_gradients(named({{"a", a}, {"s", s}}),
                                     [&] { return mean(mul_scalar(a, s)); });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor x = Tensor::randn({4, 6}, rng, 1.0, true);
    Tensor g = Tensor::randn({6}, rng, 0.5, true);
    Tensor b = Tensor::randn({6}, rng, 0.5, true);
    const auto rep = check_gradients(named({{"x", x}, {"g", g}, {"b", b}}), [&] {
      return mean(square(layernorm(x, g, b)));
    });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor b = Tensor::randn({3, 4}, rng, 1.0, true);
    const auto rep = check_gradients(named({{"a", a}, {"b", b}}),
                                     [&] { return mean(square(concat_cols(a, b))); });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor p = Tensor::randn({3, 2}, rng, 1.0, true);
    Tensor q = Tensor::randn({5, 2}, rng, 1.0, true);
    const auto rep = check_gradients(named({{"p", p}, {"q", q}}),
                                     [&] { return mean(pairwise_sqdist(p, q)); });
    CHECK(rep.max_rel < tol);
  }
  {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
    Tensor r = Tensor::randn({3}, rng, 1.0, true);
    const auto rep = check_gradients(named({{"a", a}, {"r", r}}),
                                     [&] { return mean(square(scale_rows(a, r))); });
    CHECK(rep.max_rel < tol);
  }
  {
    // through a softmax saturation region the tolerance is loosened to 1e-3
    Tensor x = Tensor::from({1, 3}, {8.0, 0.0, -8.0}, true);
    const auto rep = check_gradients(named({{"sat", x}}),
                                     [&] { return mean(mul(softmax(x, 1), x)); }, 1e-6, 1e-6);
    CHECK(rep.max_rel < 1e-3);
  }
}

TEST_CASE("tape replay is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(123);
    Tensor a = Tensor::randn({8, 8}, rng, 1.0, true);
    Tensor b = Tensor::randn({8, 8}, rng, 1.0, true);
    Tape tape;
    const Tensor out = softmax(matmul(gelu(a), b), 1);
    tape.backward(mean(out));
    std::vector<double> res(out.data().begin(), out.data().end());
    res.insert(res.end(), a.grad().begin(), a.grad().end());
    return res;
  };
  const auto r1 = run();
  const auto r2 = run();
  CHECK(r1 == r2);
}
