#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "courant/training.hpp"
#include "support/testutil.hpp"

using namespace courant;
namespace fs = std::filesystem;

TEST_CASE("l2 loss values and gradient") {
  std::mt19937_64 rng(1);
  Tensor pred = Tensor::randn({4, 3}, rng, 1.0, true);
  const Tensor target = pred.clone();
  CHECK(l2_loss(pred, target).item() == 0.0);

  const Tensor shifted = add(target, Tensor::full({4, 3}, 0.5));
  CHECK(l2_loss(pred, shifted).item() == doctest::Approx(0.25).epsilon(1e-12));

  pred.zero_grad();
  const Tensor t2 = Tensor::randn({4, 3}, rng);
  {
    Tape tape;
    tape.backward(l2_loss(pred, t2));
  }
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double expect = 2.0 *
                          (pred.data()[static_cast<std::size_t>(i)] -
                           t2.data()[static_cast<std::size_t>(i)]) /
                          static_cast<double>(pred.numel());
    CHECK(pred.grad()[static_cast<std::size_t>(i)] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(l2_loss(pred, Tensor::zeros({3, 4})), ContractError);
}

TEST_CASE("nmae definition") {
  const std::vector<double> target = {1, 10, 2, 20, 3, 30};
  const std::vector<double> stds = {2.0, 5.0};
  CHECK(nmae(target, target, stds, 2) == 0.0);

  // shifting one component by its std contributes exactly 1 for it
  std::vector<double> pred = target;
  for (int i = 0; i < 3; ++i) pred[2 * i] += 2.0;
  CHECK(nmae(pred, target, stds, 2) == doctest::Approx(0.5).epsilon(1e-12));

  // random case against an independent re-computation
  std::mt19937_64 rng(2);
  std::normal_distribution<double> d(0, 1);
  std::vector<double> p(10), t(10);
  for (auto& v : p) v = d(rng);
  for (auto& v : t) v = d(rng);
  const std::vector<double> s2 = {0.7, 1.3};
  double ref = 0;
  for (int c = 0; c < 2; ++c) {
    double mae = 0;
    for (int i = 0; i < 5; ++i) mae += std::abs(p[2 * i + c] - t[2 * i + c]);
    ref += mae / 5.0 / s2[static_cast<std::size_t>(c)];
  }
  ref /= 2.0;
  CHECK(nmae(p, t, s2, 2) == doctest::Approx(ref).epsilon(1e-12));

  CHECK_THROWS_AS(nmae(p, t, std::vector<double>{1.0, 0.0}, 2), ContractError);
}

TEST_CASE("learning-rate schedules") {
  // two-phase: flat then linear to 0.1x
  CHECK(lr_at(ScheduleMode::TwoPhase, 1e-3, 100, 0) == 1e-3);
  CHECK(lr_at(ScheduleMode::TwoPhase, 1e-3, 100, 49) == 1e-3);
  CHECK(std::abs(lr_at(ScheduleMode::TwoPhase, 1e-3, 100, 99) - 1e-4) < 1e-15);
  const double mid = lr_at(ScheduleMode::TwoPhase, 1e-3, 100, 74);
  CHECK(mid < 1e-3);
  CHECK(mid > 1e-4);

  // step: halves every 100 epochs
  CHECK(lr_at(ScheduleMode::Step, 5e-4, 300, 200) == doctest::Approx(1.25e-4).epsilon(1e-12));
  CHECK(lr_at(ScheduleMode::Step, 5e-4, 300, 99) == doctest::Approx(5e-4));

  // cosine decays monotonically
  double prev = lr_at(ScheduleMode::Cosine, 1e-3, 50, 0);
  for (std::int64_t e = 1; e < 50; ++e) {
    const double cur = lr_at(ScheduleMode::Cosine, 1e-3, 50, e);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(lr_at(ScheduleMode::TwoPhase, 1e-3, 10, 10), ContractError);
}

TEST_CASE("adamw single step matches hand-computed update") {
  // one parameter theta = 1, loss = theta^2/2 -> g = 1
  Tensor theta = Tensor::scalar(1.0, true);
  ParamList ps = {{"w.weight", theta}};
  AdamW opt(ps, {0.9, 0.999, 1e-8, 0.1});
  {
    Tape tape;
    tape.backward(scale(sum(mul(theta, theta)), 0.5));
  }
  opt.step(1e-2);
  // bias-corrected mhat = g, vhat = g^2; update = lr*(g/(|g|+eps) + wd*theta)
  const double expect = 1.0 - 1e-2 * (1.0 / (1.0 + 1e-8) + 0.1 * 1.0);
  CHECK(theta.item() == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("lr zero leaves parameters bit-identical") {
  std::mt19937_64 rng(3);
  Tensor w = Tensor::randn({4, 4}, rng, 1.0, true);
  const std::vector<double> before(w.data().begin(), w.data().end());
  ParamList ps = {{"w.weight", w}};
  AdamW opt(ps, {0.9, 0.999, 1e-8, 0.5});
  {
    Tape tape;
    tape.backward(sum(mul(w, w)));
  }
  opt.step(0.0);
  const std::vector<double> after(w.data().begin(), w.data().end());
  CHECK(before == after);
}

TEST_CASE("weight decay skips layernorm affine and anchor positions") {
  Tensor w = Tensor::scalar(1.0, true);
  Tensor g = Tensor::scalar(1.0, true);
  Tensor p = Tensor::scalar(1.0, true);
  ParamList ps = {{"block.weight", w}, {"ln.gain", g}, {"anchors.positions0", p}};
  AdamW opt(ps, {0.9, 0.999, 1e-8, 0.5});
  // zero gradients: only decay could move parameters
  opt.zero_grad();
  opt.step(1e-2);
  CHECK(w.item() < 1.0);
  CHECK(g.item() == 1.0);
  CHECK(p.item() == 1.0);
}

TEST_CASE("gradient clipping bounds the global norm") {
  std::mt19937_64 rng(4);
  Tensor a = Tensor::randn({8, 8}, rng, 1.0, true);
  Tensor b = Tensor::randn({8, 8}, rng, 1.0, true);
  ParamList ps = {{"a.weight", a}, {"b.weight", b}};
  AdamW opt(ps, {});
  {
    Tape tape;
    tape.backward(scale(sum(mul(a, b)), 10.0));
  }
  const double pre = opt.clip_gradients(2.0);
  CHECK(pre > 2.0);
  double post_sq = 0;
  for (const auto& [n, t] : ps)
    for (double gv : t.grad()) post_sq += gv * gv;
  CHECK(std::sqrt(post_sq) <= 2.0 + 1e-12);

  // norms below the threshold are untouched
  opt.zero_grad();
  {
    Tape tape;
    tape.backward(scale(sum(mul(a, b)), 1e-6));
  }
  const double pre2 = opt.clip_gradients(2.0);
  double post2 = 0;
  for (const auto& [n, t] : ps)
    for (double gv : t.grad()) post2 += gv * gv;
  CHECK(std::sqrt(post2) == doctest::Approx(pre2).epsilon(1e-12));
}

TEST_CASE("standardization round trip") {
  NormStats s;
  s.target_mean = {1.0, -2.0};
  s.target_std = {0.5, 3.0};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0, 2);
  for (int i = 0; i < 50; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double x = d(rng);
      const double z = (x - s.target_mean[static_cast<std::size_t>(c)]) /
                       s.target_std[static_cast<std::size_t>(c)];
      const double back = z * s.target_std[static_cast<std::size_t>(c)] +
                          s.target_mean[static_cast<std::size_t>(c)];
      CHECK(std::abs(back - x) < 1e-12);
    }
  }
}

TEST_CASE("checkpoint round trip: identical bytes, f32 payload, truncation errors") {
  std::mt19937_64 rng(6);
  Tensor a = Tensor::randn({3, 5}, rng, 1.0, true);
  Tensor b = Tensor::randn({7}, rng, 1.0, true);
  ParamList ps = {{"m.a", a}, {"m.b", b}};
  const auto dir = fs::temp_directory_path() / "courant_ckpt_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p1 = (dir / "c1.crnt").string();
  const auto p2 = (dir / "c2.crnt").string();
  save_checkpoint(p1, ps, R"({"hello":1})");

  const auto data = load_checkpoint(p1);
  CHECK(data.config_json == R"({"hello":1})");
  REQUIRE(data.params.size() == 2);
  CHECK(data.params[0].name == "m.a");
  CHECK(data.params[0].shape == Shape{3, 5});
  // values round through f32
  for (std::int64_t i = 0; i < a.numel(); ++i)
    CHECK(data.params[0].values[static_cast<std::size_t>(i)] ==
          static_cast<double>(static_cast<float>(a.data()[static_cast<std::size_t>(i)])));

  // save -> load -> save produces identical bytes
  Tensor a2 = Tensor::zeros({3, 5}, true);
  Tensor b2 = Tensor::zeros({7}, true);
  ParamList ps2 = {{"m.a", a2}, {"m.b", b2}};
  apply_checkpoint(data, ps2);
  save_checkpoint(p2, ps2, data.config_json);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), {});
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(bytes1 == bytes2);

  // truncated file: format error, no partial state
  const std::string trunc = bytes1.substr(0, bytes1.size() - 9);
  const auto p3 = (dir / "c3.crnt").string();
  {
    std::ofstream out(p3, std::ios::binary);
    out.write(trunc.data(), static_cast<std::streamsize>(trunc.size()));
  }
  CHECK_THROWS_AS((void)load_checkpoint(p3), FormatError);

  // bad magic
  const auto p4 = (dir / "c4.crnt").string();
  {
    std::ofstream out(p4, std::ios::binary);
    out << "NOPE" << bytes1.substr(4);
  }
  CHECK_THROWS_AS((void)load_checkpoint(p4), FormatError);

  // mismatched names surface as format errors
  ParamList wrong = {{"m.x", a2}, {"m.b", b2}};
  CHECK_THROWS_AS(apply_checkpoint(data, wrong), FormatError);
}
