#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "dicap/nets.hpp"
#include "fd_check.hpp"

using namespace dicap;
using testing::check_grads;
using testing::randm;
namespace ad = dicap::ad;

TEST_CASE("all-zero lstm maps any input to the zero state") {
  LstmParams p;
  p.in_dim = 3;
  p.hidden = 4;
  p.w = MatXd::Zero(16, 7);
  p.b = MatXd::Zero(16, 1);
  ad::OpCtx<MatXd> ctx{};
  LstmCell<MatXd> cell(ctx, p);
  auto s = cell.zero_state(ctx, 2);
  Rng rng(3);
  auto s1 = cell.step(randm(3, 2, rng), s);
  CHECK(s1.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s1.c.cwiseAbs().maxCoeff() == 0.0);
  // fixed point: zero inputs keep the trajectory constant at zero
  auto s2 = cell.step(MatXd::Zero(3, 2), s1);
  CHECK(s2.h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s2.c.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm hidden state stays inside the tanh output bound") {
  Rng rng(5);
  LstmParams p = make_lstm(2, 8, rng);
  p.w *= 10.0;  // push toward saturation
  ad::OpCtx<MatXd> ctx{};
  LstmCell<MatXd> cell(ctx, p);
  auto s = cell.zero_state(ctx, 4);
  for (int t = 0; t < 50; ++t) {
    s = cell.step(randm(2, 4, rng) * 5.0, s);
    CHECK(s.h.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("lstm forget bias initialized to one, rest zero") {
  Rng rng(9);
  LstmParams p = make_lstm(3, 5, rng);
  CHECK(p.b.block(0, 0, 5, 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.b.block(5, 0, 5, 1).array() == 1.0).all());
  CHECK(p.b.block(10, 0, 10, 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm step gradient matches finite differences") {
  Rng rng(17);
  LstmParams p = make_lstm(3, 4, rng);
  MatXd x = randm(3, 2, rng);
  MatXd h0 = randm(4, 2, rng) * 0.5;
  MatXd c0 = randm(4, 2, rng) * 0.5;
  auto loss = [&](auto ctx) {
    using V = decltype(ctx.lift(MatXd()));
    LstmCell<V> cell(ctx, p);
    LstmState<V> s{ctx.lift(h0), ctx.lift(c0)};
    auto s1 = cell.step(ctx.lift(x), s);
    return ad::sum_all(ad::mul(s1.h, s1.h));  // squared norm of h'
  };
  check_grads(loss, p.params(), 1e-5);
}

TEST_CASE("lstm tape forward equals plain forward bit for bit") {
  Rng rng(23);
  LstmParams p = make_lstm(2, 6, rng);
  MatXd x = randm(2, 3, rng);
  ad::OpCtx<MatXd> mctx{};
  LstmCell<MatXd> mcell(mctx, p);
  auto ms = mcell.step(x, mcell.zero_state(mctx, 3));
  ad::Tape tape;
  ad::OpCtx<ad::Var> vctx{&tape};
  LstmCell<ad::Var> vcell(vctx, p);
  auto vs = vcell.step(vctx.lift(x), vcell.zero_state(vctx, 3));
  CHECK((ms.h.array() == tape.value(vs.h).array()).all());
  CHECK((ms.c.array() == tape.value(vs.c).array()).all());
}

TEST_CASE("identity single-layer mlp passes input through") {
  MlpParams p;
  p.widths = {3, 3};
  p.w.push_back(MatXd::Identity(3, 3));
  p.b.push_back(MatXd::Zero(3, 1));
  p.out_act = Act::kIdentity;
  ad::OpCtx<MatXd> ctx{};
  Mlp<MatXd> net(ctx, p);
  Rng rng(2);
  MatXd x = randm(3, 4, rng);
  CHECK((net.forward(x).array() == x.array()).all());
}

TEST_CASE("softmax head with equal logits yields the uniform vector") {
  MlpParams p;
  p.widths = {2, 4};
  p.w.push_back(MatXd::Zero(4, 2));
  p.b.push_back(MatXd::Constant(4, 1, 3.7));
  p.out_act = Act::kSoftmax;
  ad::OpCtx<MatXd> ctx{};
  Mlp<MatXd> net(ctx, p);
  MatXd out = net.forward(MatXd::Ones(2, 1));
  CHECK((out.array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("two-layer mlp matches the hand-computed matrix chain") {
  MlpParams p;
  p.widths = {2, 2, 2};
  MatXd w0(2, 2), w1(2, 2);
  w0 << 1.0, 2.0, -1.0, 0.5;
  w1 << 0.25, -0.5, 1.0, 1.0;
  p.w = {w0, w1};
  p.b = {MatXd::Zero(2, 1), MatXd::Zero(2, 1)};
  p.hidden_act = Act::kTanh;
  p.out_act = Act::kIdentity;
  ad::OpCtx<MatXd> ctx{};
  Mlp<MatXd> net(ctx, p);
  MatXd x(2, 1);
  x << 0.3, -0.2;
  MatXd h = (w0 * x).array().tanh().matrix();
  MatXd want = w1 * h;
  CHECK((net.forward(x) - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mlp gradient matches finite differences") {
  Rng rng(31);
  MlpParams p = make_mlp({3, 5, 2}, Act::kTanh, Act::kIdentity, rng);
  MatXd x = randm(3, 2, rng);
  auto loss = [&](auto ctx) {
    using V = decltype(ctx.lift(MatXd()));
    Mlp<V> net(ctx, p);
    return ad::mean_all(ad::exp(ad::scale(net.forward(ctx.lift(x)), 0.5)));
  };
  check_grads(loss, p.params(), 1e-5);
}

TEST_CASE("softmax_pmf spot values") {
  VecXd z4 = VecXd::Zero(4);
  CHECK((softmax_pmf(z4).array() - 0.25).abs().maxCoeff() < 1e-15);
  VecXd z2(2);
  z2 << std::log(2.0), 0.0;
  VecXd p = softmax_pmf(z2);
  CHECK(p(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax_pmf is shift invariant and a valid pmf") {
  Rng rng(41);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 1000; ++trial) {
    VecXd z = randm(5, 1, rng) * 20.0;
    VecXd p = softmax_pmf(z);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
    VecXd q = softmax_pmf((z.array() + shift(rng)).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("model serialization round-trips and validates") {
  Rng rng(53);
  LstmParams lstm = make_lstm(2, 3, rng);
  MlpParams mlp = make_mlp({3, 4, 2}, Act::kTanh, Act::kSoftmax, rng);
  NamedParams named = lstm.named("trunk");
  for (auto& kv : mlp.named("head")) named.push_back(kv);
  std::string path = "test_model_roundtrip.bin";
  save_model(path, named);

  LstmParams lstm2 = make_lstm(2, 3, rng);  // different values
  MlpParams mlp2 = make_mlp({3, 4, 2}, Act::kTanh, Act::kSoftmax, rng);
  NamedParams named2 = lstm2.named("trunk");
  for (auto& kv : mlp2.named("head")) named2.push_back(kv);
  load_model(path, named2);
  CHECK((lstm.w.array() == lstm2.w.array()).all());
  CHECK((lstm.b.array() == lstm2.b.array()).all());
  for (std::size_t l = 0; l < mlp.w.size(); ++l) {
    CHECK((mlp.w[l].array() == mlp2.w[l].array()).all());
    CHECK((mlp.b[l].array() == mlp2.b[l].array()).all());
  }

  // wrong shape refuses to load
  MlpParams wrong = make_mlp({3, 5, 2}, Act::kTanh, Act::kSoftmax, rng);
  NamedParams named3 = lstm2.named("trunk");
  for (auto& kv : wrong.named("head")) named3.push_back(kv);
  CHECK_THROWS_AS(load_model(path, named3), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("dimension mismatches raise errors") {
  Rng rng(61);
  LstmParams p = make_lstm(3, 4, rng);
  ad::OpCtx<MatXd> ctx{};
  LstmCell<MatXd> cell(ctx, p);
  auto s = cell.zero_state(ctx, 2);
  CHECK_THROWS_AS(cell.step(MatXd::Zero(5, 2), s), ad::ShapeError);
  MlpParams m = make_mlp({3, 2}, Act::kTanh, Act::kIdentity, rng);
  Mlp<MatXd> net(ctx, m);
  CHECK_THROWS_AS(net.forward(MatXd::Zero(4, 1)), ad::ShapeError);
}
