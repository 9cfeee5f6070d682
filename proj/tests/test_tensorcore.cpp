#include <doctest.h>

#include <random>

#include "elden/checkpoint.hpp"
#include "elden/kernels.hpp"
#include "elden/optim.hpp"
#include "elden/tape.hpp"
#include "oracles.hpp"

using namespace elden::tc;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("forward_op: relu, softmax, matmul against the triple-loop oracle") {
  Tape t;
  Val x = t.leaf(Tensor({1, 2}, {-1.0, 2.0}));
  Val r = forward_op(t, "relu", std::vector<Val>{x});
  CHECK(r.v().data[0] == 0.0);
  CHECK(r.v().data[1] == 2.0);

  Val z = t.leaf(Tensor({1, 2}, {0.0, 0.0}));
  Val s = forward_op(t, "softmax", std::vector<Val>{z});
  CHECK(s.v().data[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.v().data[1] == doctest::Approx(0.5).epsilon(1e-12));

  std::mt19937_64 rng(7);
  Tensor A = random_tensor({2, 3}, rng);
  Tensor B = random_tensor({3, 2}, rng);
  Val va = t.leaf(A), vb = t.leaf(B);
  Val c = forward_op(t, "matmul", std::vector<Val>{va, vb});
  Tensor expect = oracle::matmul(A, B);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(std::fabs(c.v().data[i] - expect.data[i]) <= 1e-12);
}

TEST_CASE("forward_op: shape mismatch rejected with a diagnostic naming the op") {
  Tape t;
  Val a = t.leaf(Tensor::zeros({2, 3}));
  Val b = t.leaf(Tensor::zeros({4, 2}));
  try {
    forward_op(t, "matmul", std::vector<Val>{a, b});
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(forward_op(t, "frobnicate", std::vector<Val>{a}), std::invalid_argument);
}

TEST_CASE("backward: d/dx x^2 at x=3 is 6") {
  Tape t;
  Val x = t.leaf(Tensor::scalar(3.0), true);
  Val y = t.mul(x, x);
  std::vector<std::int32_t> targets{x.id};
  auto g = t.gradients(y, targets);
  CHECK(g[0].data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: gradient of a constant w.r.t. x is zero") {
  Tape t;
  Val x = t.leaf(Tensor::scalar(2.0), true);
  Val c = t.leaf(Tensor::scalar(5.0));
  Val y = t.mul(c, c);
  std::vector<std::int32_t> targets{x.id};
  auto g = t.gradients(y, targets);
  CHECK(g[0].data[0] == 0.0);
}

TEST_CASE("backward: non-scalar output rejected") {
  Tape t;
  Val x = t.leaf(Tensor::zeros({2, 2}), true);
  Val y = t.relu(x);
  std::vector<std::int32_t> targets{x.id};
  CHECK_THROWS_AS(t.backward(y, targets), std::invalid_argument);
}

TEST_CASE("backward: sum(tanh(Wx)) gradient w.r.t. W matches finite differences") {
  std::mt19937_64 rng(11);
  Tensor W = random_tensor({4, 4}, rng);
  Tensor X = random_tensor({4, 4}, rng);

  auto eval = [&]() {
    Tape t;
    Val w = t.leaf(W, true);
    Val x = t.leaf(X);
    return t.sum_all(t.tanh_(t.matmul(w, x))).v().data[0];
  };

  Tape t;
  Val w = t.leaf(W, true);
  Val x = t.leaf(X);
  Val loss = t.sum_all(t.tanh_(t.matmul(w, x)));
  std::vector<std::int32_t> targets{w.id};
  auto g = t.gradients(loss, targets);

  for (std::size_t i = 0; i < W.size(); ++i) {
    double fdv = oracle::fd(eval, &W.data[i]);
    CHECK(oracle::grad_close(g[0].data[i], fdv, 1e-6));
  }
}

TEST_CASE("input_jacobian: zero weight, identity, and a 2-layer tanh net vs FD") {
  SUBCASE("linear map with a zero weight has a zero jacobian entry") {
    Tape t;
    Tensor W({2, 2}, {1.0, 0.0, 0.5, 2.0});  // W[0][1] = 0
    Val x = t.leaf(Tensor({1, 2}, {0.3, -0.7}), true);
    Val w = t.leaf(W);
    Val y = t.matmul(x, w);  // y_j = sum_i x_i * W[i][j]
    std::vector<Val> outs{t.slice_cols(y, 0, 1), t.slice_cols(y, 1, 2)};
    std::vector<Val> ins{x};
    auto J = input_jacobian(t, ins, outs);
    CHECK(J.finite);
    // d y_1 / d x_0 = W[0][1] = 0
    CHECK(J.jac.at(0, 1) == 0.0);
    CHECK(J.jac.at(0, 0) == doctest::Approx(1.0));
    CHECK(J.jac.at(1, 1) == doctest::Approx(2.0));
  }

  SUBCASE("identity map gives the identity jacobian") {
    Tape t;
    Val x = t.leaf(Tensor({1, 3}, {0.1, 0.2, 0.3}), true);
    std::vector<Val> outs;
    for (int j = 0; j < 3; ++j) outs.push_back(t.slice_cols(x, j, j + 1));
    std::vector<Val> ins{x};
    auto J = input_jacobian(t, ins, outs);
    for (int d = 0; d < 3; ++d)
      for (int j = 0; j < 3; ++j) CHECK(J.jac.at(d, j) == (d == j ? 1.0 : 0.0));
  }

  SUBCASE("2-layer tanh net jacobian matches FD") {
    std::mt19937_64 rng(13);
    Tensor W1 = random_tensor({3, 5}, rng);
    Tensor W2 = random_tensor({5, 2}, rng);
    Tensor X = random_tensor({1, 3}, rng);

    auto eval_out = [&](int j) {
      return [&, j]() {
        Tape t;
        Val x = t.leaf(X, true);
        Val h = t.tanh_(t.matmul(x, t.leaf(W1)));
        Val y = t.matmul(h, t.leaf(W2));
        return y.v().data[j];
      };
    };

    Tape t;
    Val x = t.leaf(X, true);
    Val h = t.tanh_(t.matmul(x, t.leaf(W1)));
    Val y = t.matmul(h, t.leaf(W2));
    std::vector<Val> outs{t.slice_cols(y, 0, 1), t.slice_cols(y, 1, 2)};
    std::vector<Val> ins{x};
    auto J = input_jacobian(t, ins, outs);
    CHECK(J.finite);
    for (int j = 0; j < 2; ++j)
      for (int d = 0; d < 3; ++d) {
        double fdv = oracle::fd(eval_out(j), &X.data[d]);
        CHECK(oracle::grad_close(J.jac.at(d, j), fdv, 1e-6));
      }
  }
}

TEST_CASE("second order: penalty of linear y=wx is |w|, d penalty/dw = sign(w)") {
  Tape t;
  Val w = t.leaf(Tensor::scalar(2.0), true);
  Val x = t.leaf(Tensor::scalar(0.7), true);
  Val y = t.mul(w, x);
  // first (recorded) backward: jacobian dy/dx = w
  std::vector<std::int32_t> xt{x.id};
  auto adj = t.backward(y, xt);
  REQUIRE(adj[x.id] >= 0);
  Val dydx{&t, adj[x.id]};
  CHECK(dydx.v().data[0] == doctest::Approx(2.0));
  Val penalty = t.sum_all(t.abs_(dydx));
  CHECK(penalty.v().data[0] == doctest::Approx(2.0));  // |w|
  std::vector<std::int32_t> wt{w.id};
  auto g = t.gradients(penalty, wt);
  CHECK(g[0].data[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("second order: random 2-layer net penalty gradient matches FD at 1e-4") {
  std::mt19937_64 rng(17);
  Tensor W1 = random_tensor({3, 4}, rng);
  Tensor W2 = random_tensor({4, 2}, rng);
  Tensor X = random_tensor({1, 3}, rng);

  auto penalty_value = [&]() -> double {
    Tape t;
    Val x = t.leaf(X, true);
    Val w1 = t.leaf(W1, true);
    Val w2 = t.leaf(W2, true);
    Val h = t.tanh_(t.matmul(x, w1));
    Val y = t.matmul(h, w2);
    std::vector<std::int32_t> xt{x.id};
    Val p;
    for (int j = 0; j < 2; ++j) {
      auto adj = t.backward(t.slice_cols(y, j, j + 1), xt);
      Val piece = t.sum_all(t.abs_(Val{&t, adj[x.id]}));
      p = p.ok() ? t.add(p, piece) : piece;
    }
    return p.v().data[0];
  };

  // analytic parameter gradient of the penalty
  Tape t;
  Val x = t.leaf(X, true);
  Val w1 = t.leaf(W1, true);
  Val w2 = t.leaf(W2, true);
  Val h = t.tanh_(t.matmul(x, w1));
  Val y = t.matmul(h, w2);
  std::vector<std::int32_t> xt{x.id};
  Val p;
  for (int j = 0; j < 2; ++j) {
    auto adj = t.backward(t.slice_cols(y, j, j + 1), xt);
    Val piece = t.sum_all(t.abs_(Val{&t, adj[x.id]}));
    p = p.ok() ? t.add(p, piece) : piece;
  }
  std::vector<std::int32_t> wt{w1.id, w2.id};
  auto g = t.gradients(p, wt);

  auto eval = [&]() { return penalty_value(); };
  for (std::size_t i = 0; i < W1.size(); ++i) {
    double fdv = oracle::fd(eval, &W1.data[i]);
    CHECK(oracle::grad_close(g[0].data[i], fdv, 1e-4, 1e-4, 1e-7));
  }
  for (std::size_t i = 0; i < W2.size(); ++i) {
    double fdv = oracle::fd(eval, &W2.data[i]);
    CHECK(oracle::grad_close(g[1].data[i], fdv, 1e-4, 1e-4, 1e-7));
  }
}

TEST_CASE("property: random small tanh/softmax networks pass FD gradient checks") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> dims(2, 5);
    const int din = dims(rng), dh = dims(rng), dout = dims(rng);
    Tensor W1 = random_tensor({(std::size_t)din, (std::size_t)dh}, rng);
    Tensor b1 = random_tensor({1, (std::size_t)dh}, rng, 0.5);
    Tensor W2 = random_tensor({(std::size_t)dh, (std::size_t)dout}, rng);
    Tensor X = random_tensor({2, (std::size_t)din}, rng);

    auto build = [&](Tape& t, Val& w1v, Val& w2v) {
      w1v = t.leaf(W1, true);
      w2v = t.leaf(W2, true);
      Val b1v = t.leaf(b1);
      Val x = t.leaf(X);
      Val h = t.tanh_(t.add_row(t.matmul(x, w1v), b1v));
      Val z = t.matmul(h, w2v);
      Val p = t.softmax_rows(z);
      return t.mean_all(t.log_(t.clamp_min(p, 1e-12)));
    };

    Tape t;
    Val w1v, w2v;
    Val loss = build(t, w1v, w2v);
    std::vector<std::int32_t> targets{w1v.id, w2v.id};
    auto g = t.gradients(loss, targets);

    auto eval = [&]() {
      Tape tt;
      Val a, b;
      return build(tt, a, b).v().data[0];
    };
    for (std::size_t i = 0; i < W1.size(); ++i)
      CHECK(oracle::grad_close(g[0].data[i], oracle::fd(eval, &W1.data[i]), 1e-6));
    for (std::size_t i = 0; i < W2.size(); ++i)
      CHECK(oracle::grad_close(g[1].data[i], oracle::fd(eval, &W2.data[i]), 1e-6));
  }
}

TEST_CASE("softmax rows sum to one and stay strictly positive") {
  std::mt19937_64 rng(29);
  Tape t;
  Tensor X = random_tensor({8, 6}, rng, 30.0);  // wide logit range
  Val s = t.softmax_rows(t.leaf(X));
  for (std::size_t i = 0; i < 8; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(s.v().at(i, j) > 0.0);
      sum += s.v().at(i, j);
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("tape replay reproduces forward values bit-exactly") {
  std::mt19937_64 rng(31);
  Tape t;
  Val x = t.leaf(random_tensor({3, 4}, rng), true);
  Val w = t.leaf(random_tensor({4, 4}, rng), true);
  Val y = t.softmax_rows(t.tanh_(t.matmul(x, w)));
  Val loss = t.mean_all(t.log_(y));
  std::vector<std::int32_t> targets{w.id};
  t.gradients(loss, targets);

  std::vector<std::vector<double>> before;
  for (std::int32_t i = 0; i < t.size(); ++i) before.push_back(t.node(i).value.data);
  t.replay();
  for (std::int32_t i = 0; i < t.size(); ++i) {
    REQUIRE(t.node(i).value.data.size() == before[i].size());
    for (std::size_t k = 0; k < before[i].size(); ++k)
      CHECK(t.node(i).value.data[k] == before[i][k]);
  }
}

TEST_CASE("block matmul and pack/unpack agree with dense equivalents") {
  std::mt19937_64 rng(37);
  const std::int32_t S = 3, pa = 2, pb = 4, k = 5;
  Tensor A = random_tensor({(std::size_t)(S * pa), (std::size_t)k}, rng);
  Tensor B = random_tensor({(std::size_t)(S * pb), (std::size_t)k}, rng);
  Tape t;
  Val c = t.bmm_nt(t.leaf(A), t.leaf(B), pa, pb);
  for (int s = 0; s < S; ++s)
    for (int i = 0; i < pa; ++i)
      for (int j = 0; j < pb; ++j) {
        double acc = 0;
        for (int p = 0; p < k; ++p) acc += A.at(s * pa + i, p) * B.at(s * pb + j, p);
        CHECK(c.v().at(s * pa + i, j) == doctest::Approx(acc).epsilon(1e-12));
      }

  // pack then unpack is the identity
  std::vector<Val> toks;
  for (int i = 0; i < 3; ++i) toks.push_back(t.leaf(random_tensor({4, 2}, rng)));
  Val packed = t.pack_tokens(toks);
  for (int i = 0; i < 3; ++i) {
    Val u = t.unpack_token(packed, i, 3);
    for (std::size_t q = 0; q < u.v().size(); ++q)
      CHECK(u.v().data[q] == toks[i].v().data[q]);
  }
}

TEST_CASE("serial and OpenMP kernels produce bit-identical results") {
  std::mt19937_64 rng(41);
  Tensor A = random_tensor({64, 80}, rng);
  Tensor B = random_tensor({80, 48}, rng);
  Tensor Cs = Tensor::zeros({64, 48}), Cp = Tensor::zeros({64, 48});
  elden::kern::serial::dgemm(false, false, 64, 48, 80, A.data.data(), 80, B.data.data(), 48,
                             Cs.data.data(), 48, 0.0);
  elden::kern::par::dgemm(false, false, 64, 48, 80, A.data.data(), 80, B.data.data(), 48,
                          Cp.data.data(), 48, 0.0);
  for (std::size_t i = 0; i < Cs.size(); ++i) CHECK(Cs.data[i] == Cp.data[i]);

  Tensor X = random_tensor({6 * 9, 16}, rng);
  Tensor Y = random_tensor({6 * 9, 16}, rng);
  Tensor Zs = Tensor::zeros({6 * 9, 9}), Zp = Tensor::zeros({6 * 9, 9});
  elden::kern::serial::block_matmul_nt(6, 9, 9, 16, X.data.data(), Y.data.data(), Zs.data.data());
  elden::kern::par::block_matmul_nt(6, 9, 9, 16, X.data.data(), Y.data.data(), Zp.data.data());
  for (std::size_t i = 0; i < Zs.size(); ++i) CHECK(Zs.data[i] == Zp.data[i]);
}

TEST_CASE("adam: zero grad keeps params, one-step hand value, determinism") {
  std::mt19937_64 rng(43);

  SUBCASE("zero gradient leaves parameters unchanged") {
    ParamStore ps;
    ps.add("w", Tensor({1, 1}, {0.5}));
    AdamState adam;
    adam.lr = 0.1;
    adam.step(ps);
    CHECK(ps.entry(0).value.data[0] == 0.5);
  }

  SUBCASE("single scalar, g=1, one step, lr=0.1 decreases by ~0.1") {
    ParamStore ps;
    ps.add("w", Tensor({1, 1}, {1.0}));
    ps.entry(0).grad.data[0] = 1.0;
    AdamState adam;
    adam.lr = 0.1;
    adam.step(ps);
    // bias-corrected: mhat = 1, vhat = 1 -> delta = lr / (1 + eps)
    const double expect = 1.0 - 0.1 / (1.0 + 1e-8);
    CHECK(ps.entry(0).value.data[0] == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("identical parameter sets and gradients update identically") {
    ParamStore a, b;
    Tensor init = random_tensor({3, 3}, rng);
    a.add("w", init);
    b.add("w", init);
    Tensor g = random_tensor({3, 3}, rng);
    a.entry(0).grad = g;
    b.entry(0).grad = g;
    AdamState sa, sb;
    for (int i = 0; i < 5; ++i) {
      sa.step(a);
      sb.step(b);
    }
    for (std::size_t i = 0; i < init.size(); ++i)
      CHECK(a.entry(0).value.data[i] == b.entry(0).value.data[i]);
  }

  SUBCASE("non-finite gradient skips the step and logs an incident") {
    ParamStore ps;
    ps.add("w", Tensor({1, 1}, {1.0}));
    ps.entry(0).grad.data[0] = std::numeric_limits<double>::quiet_NaN();
    AdamState adam;
    Incidents inc;
    CHECK_FALSE(adam.step(ps, &inc));
    CHECK(ps.entry(0).value.data[0] == 1.0);
    CHECK(inc.skipped_adam_steps == 1);
  }
}

TEST_CASE("checkpoint round-trip restores every tensor") {
  std::mt19937_64 rng(47);
  ParamStore a;
  a.add("layer1.w", random_tensor({4, 3}, rng));
  a.add("layer1.b", random_tensor({1, 3}, rng));
  a.add("head.w", random_tensor({3, 2}, rng));
  const std::string path = "/tmp/elden_test_ckpt.bin";
  save_checkpoint(path, a);

  ParamStore b;
  b.add("layer1.w", Tensor::zeros({4, 3}));
  b.add("layer1.b", Tensor::zeros({1, 3}));
  b.add("head.w", Tensor::zeros({3, 2}));
  load_checkpoint(path, b);
  for (int i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < a.entry(i).value.size(); ++k)
      CHECK(a.entry(i).value.data[k] == b.entry(i).value.data[k]);

  ParamStore c;
  c.add("layer1.w", Tensor::zeros({4, 4}));
  CHECK_THROWS(load_checkpoint(path, c));
}
