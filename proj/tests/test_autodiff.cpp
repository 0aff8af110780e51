#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tride/checkpoint.hpp"
#include "tride/gradcheck.hpp"
#include "tride/optim.hpp"
#include "tride/rng.hpp"
#include "tride/tape.hpp"
#include "tride/tensor.hpp"

using namespace tride;

namespace {

Tensor<double> rand_t(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor<double>::uniform(std::move(s), rng, lo, hi);
}

// FD-vs-analytic check for a scalar-valued graph over several inputs.
double check(const BuildLossFn& f, const std::vector<Tensor<double>>& xs, double eps = 1e-5) {
  return grad_check_multi(f, xs, eps);
}

}  // namespace

TEST_CASE("tensor shape utilities") {
  CHECK(shape_numel({2, 3, 4}) == 24);
  CHECK(shape_str({2, 3}) == "[2x3]");
  CHECK_THROWS_AS(shape_numel({2, 0}), DimError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), DimError);
}

TEST_CASE("matmul identity") {
  Tape<double> t;
  const Var a = t.leaf(Tensor<double>::from({2, 2}, {1, 0, 0, 1}));
  const Var b = t.leaf(Tensor<double>::from({2, 2}, {1, 2, 3, 4}));
  const Var c = t.matmul(a, b);
  CHECK(t.value(c).data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul hand expansion") {
  Tape<double> t;
  const Var a = t.leaf(Tensor<double>::from({2, 2}, {1, 0, 0, 0}));
  const Var b = t.leaf(Tensor<double>::from({2, 2}, {0, 1, 1, 0}));
  const Var c = t.matmul(a, b);
  CHECK(t.value(c).data == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("matmul shape errors") {
  Tape<double> t;
  const Var a = t.leaf(Tensor<double>({2, 3}));
  const Var b = t.leaf(Tensor<double>({2, 3}));
  CHECK_THROWS_AS(t.matmul(a, b), DimError);
  const Var v = t.leaf(Tensor<double>({3}));
  CHECK_THROWS_AS(t.matmul(a, v), DimError);
}

TEST_CASE("matmul gradient of sum equals ones times B^T") {
  Rng rng(11);
  const auto A = rand_t({2, 3}, rng);
  const auto B = rand_t({3, 4}, rng);
  Tape<double> t;
  const Var a = t.leaf(A, true);
  const Var b = t.leaf(B, false);
  const Var loss = t.sum(t.matmul(a, b));
  t.backward(loss);
  const auto ga = t.grad(a);
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 3; ++k) {
      double expect = 0.0;
      for (int j = 0; j < 4; ++j) expect += B.at2(k, j);
      CHECK(ga.at2(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  // same thing against finite differences
  const double err = check(
      [&](Tape<double>& tp, const std::vector<Var>& v) {
        return tp.sum(tp.matmul(v[0], v[1]));
      },
      {A, B}, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("conv2d 1x1 identity") {
  Tape<double> t;
  Rng rng(3);
  const auto X = rand_t({1, 4, 5}, rng);
  const Var x = t.leaf(X);
  const Var w = t.leaf(Tensor<double>::from({1, 1, 1, 1}, {1.0}));
  const Var y = t.conv2d(x, w);
  CHECK(t.value(y).shape == Shape{1, 4, 5});
  CHECK(t.value(y).data == X.data);
}

TEST_CASE("conv2d all-ones 3x3 sums the window") {
  Tape<double> t;
  const Var x = t.leaf(Tensor<double>::full({1, 3, 3}, 1.0));
  const Var w = t.leaf(Tensor<double>::full({1, 1, 3, 3}, 1.0));
  const Var y = t.conv2d(x, w, 1, 0, 1);
  CHECK(t.value(y).shape == Shape{1, 1, 1});
  CHECK(t.value(y).data[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d output extents") {
  Tape<double> t;
  const Var x = t.leaf(Tensor<double>({2, 8, 10}));
  const Var w = t.leaf(Tensor<double>({3, 2, 3, 3}));
  CHECK(t.shape(t.conv2d(x, w, 1, 1, 1)) == Shape{3, 8, 10});
  CHECK(t.shape(t.conv2d(x, w, 2, 1, 1)) == Shape{3, 4, 5});
  CHECK(t.shape(t.conv2d(x, w, 1, 2, 2)) == Shape{3, 8, 10});
  const Var small = t.leaf(Tensor<double>({2, 2, 2}));
  CHECK_THROWS_AS(t.conv2d(small, w, 1, 0, 1), DimError);
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(5);
  const auto X = rand_t({2, 4, 4}, rng);
  const auto W = rand_t({3, 2, 3, 3}, rng);
  for (const auto& [stride, pad, dil] :
       std::vector<std::tuple<int, int, int>>{{1, 1, 1}, {2, 1, 1}, {1, 2, 2}}) {
    const double err = check(
        [&, s = stride, p = pad, d = dil](Tape<double>& tp, const std::vector<Var>& v) {
          return tp.sum(tp.conv2d(v[0], v[1], s, p, d));
        },
        {X, W});
    CHECK(err < 1e-4);
  }
  // non-linear composition so the FD actually exercises accumulation
  const double err = check(
      [&](Tape<double>& tp, const std::vector<Var>& v) {
        const Var y = tp.conv2d(v[0], v[1], 1, 1, 1);
        return tp.mean(tp.mul(tp.sigmoid(y), y));
      },
      {X, W});
  CHECK(err < 1e-4);
}

TEST_CASE("elementwise ops and activations match finite differences") {
  Rng rng(7);
  const auto A = rand_t({3, 4}, rng);
  const auto B = rand_t({3, 4}, rng, 0.1, 1.5);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          return tp.sum(tp.mul(tp.add(v[0], v[1]), tp.sub(v[0], v[1])));
        },
        {A, B}) < 1e-4);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          return tp.mean(tp.sigmoid(tp.tanh(v[0])));
        },
        {A}) < 1e-4);
  // relu checked away from the kink
  const auto C = Tensor<double>::from({2, 2}, {0.5, -0.5, 1.25, -2.0});
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          return tp.sum(tp.relu(v[0]));
        },
        {C}) < 1e-4);
  Tape<double> t;
  CHECK_THROWS_AS(t.add(t.leaf(Tensor<double>({2})), t.leaf(Tensor<double>({3}))), DimError);
}

TEST_CASE("softmax rows sum to one and gradient is correct") {
  Rng rng(9);
  const auto X = rand_t({4, 5}, rng, -3.0, 3.0);
  Tape<double> t;
  const Var y = t.softmax_lastdim(t.leaf(X));
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) {
      const double p = t.value(y).at2(r, c);
      CHECK(p > 0.0);
      s += p;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          const Var sm = tp.softmax_lastdim(v[0]);
          return tp.sum(tp.mul(sm, sm));  // non-linear readout
        },
        {X}) < 1e-4);
}

TEST_CASE("concat and slice round-trip with gradients") {
  Rng rng(13);
  const auto A = rand_t({2, 3, 2}, rng);
  const auto B = rand_t({2, 1, 2}, rng);
  Tape<double> t;
  const Var a = t.leaf(A);
  const Var b = t.leaf(B);
  const Var cat = t.concat({a, b}, 1);
  CHECK(t.shape(cat) == Shape{2, 4, 2});
  const Var back = t.slice(cat, 1, 0, 3);
  CHECK(t.value(back).data == A.data);
  const Var tail = t.slice(cat, 1, 3, 1);
  CHECK(t.value(tail).data == B.data);
  CHECK_THROWS_AS(t.slice(cat, 1, 3, 2), DimError);
  CHECK_THROWS_AS(t.concat({a, t.leaf(Tensor<double>({2, 1, 3}))}, 1), DimError);

  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          const Var cat2 = tp.concat({v[0], v[1]}, 1);
          const Var s = tp.slice(cat2, 1, 1, 3);
          return tp.sum(tp.mul(s, s));
        },
        {A, B}) < 1e-4);
}

TEST_CASE("reductions and pooling") {
  Rng rng(17);
  const auto X = rand_t({2, 3, 4}, rng);
  Tape<double> t;
  const Var x = t.leaf(X);
  double total = 0.0;
  for (double v : X.data) total += v;
  CHECK(t.value(t.sum(x)).data[0] == doctest::Approx(total).epsilon(1e-12));
  CHECK(t.value(t.mean(x)).data[0] == doctest::Approx(total / 24.0).epsilon(1e-12));
  const Var g = t.global_avg_pool_2d(x);
  CHECK(t.shape(g) == Shape{2});
  double ch0 = 0.0;
  for (int i = 0; i < 12; ++i) ch0 += X.data[i];
  CHECK(t.value(g).data[0] == doctest::Approx(ch0 / 12.0).epsilon(1e-12));

  for (auto builder : std::vector<BuildLossFn>{
           [](Tape<double>& tp, const std::vector<Var>& v) {
             const Var m = tp.mean(v[0]);
             return tp.mul(m, m);
           },
           [](Tape<double>& tp, const std::vector<Var>& v) {
             const Var p = tp.global_avg_pool_2d(v[0]);
             return tp.sum(tp.mul(p, p));
           }}) {
    CHECK(check(builder, {X}) < 1e-4);
  }
}

TEST_CASE("adaptive_avg_pool_1d buckets") {
  // n=4 -> m=2: plain halves
  Tape<double> t;
  const Var x = t.leaf(Tensor<double>::from({4}, {1, 3, 5, 7}));
  const Var y = t.adaptive_avg_pool_1d(x, 2);
  CHECK(t.value(y).data == std::vector<double>{2, 6});
  // n=3 -> m=2: buckets [0,2) and [1,3) overlap on the middle element
  const Var x3 = t.leaf(Tensor<double>::from({3}, {1, 2, 4}));
  const Var y3 = t.adaptive_avg_pool_1d(x3, 2);
  CHECK(t.value(y3).data == std::vector<double>{1.5, 3.0});
  // n=2 -> m=4: upsampling buckets repeat elements
  const Var x2 = t.leaf(Tensor<double>::from({2}, {10, 20}));
  const Var y4 = t.adaptive_avg_pool_1d(x2, 4);
  CHECK(t.value(y4).data == std::vector<double>{10, 10, 20, 20});

  Rng rng(19);
  const auto X = rand_t({7}, rng);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          const Var p = tp.adaptive_avg_pool_1d(v[0], 3);
          return tp.sum(tp.mul(p, p));
        },
        {X}) < 1e-4);
}

TEST_CASE("upsample_nearest_2x") {
  Tape<double> t;
  const Var x = t.leaf(Tensor<double>::from({1, 1, 2}, {1, 2}));
  const Var y = t.upsample_nearest_2x(x);
  CHECK(t.shape(y) == Shape{1, 2, 4});
  CHECK(t.value(y).data == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
  Rng rng(23);
  const auto X = rand_t({2, 3, 2}, rng);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          const Var u = tp.upsample_nearest_2x(v[0]);
          return tp.sum(tp.mul(u, u));
        },
        {X}) < 1e-4);
}

TEST_CASE("broadcast, reshape, transpose, scalar_mul") {
  Tape<double> t;
  const Var v = t.leaf(Tensor<double>::from({2}, {3, 4}));
  const Var b = t.broadcast_spatial(v, 2, 3);
  CHECK(t.shape(b) == Shape{2, 2, 3});
  CHECK(t.value(b).at3(1, 1, 2) == 4.0);
  const Var m = t.leaf(Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  const Var mt = t.transpose2d(m);
  CHECK(t.shape(mt) == Shape{3, 2});
  CHECK(t.value(mt).data == std::vector<double>{1, 4, 2, 5, 3, 6});
  const Var r = t.reshape(m, {3, 2});
  CHECK(t.value(r).data == t.value(m).data);
  CHECK_THROWS_AS(t.reshape(m, {4, 2}), DimError);
  const Var s = t.scalar_mul(m, 0.5);
  CHECK(t.value(s).data[5] == 3.0);

  Rng rng(29);
  const auto V = rand_t({3}, rng);
  const auto M = rand_t({3, 4}, rng);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v2) {
          const Var bb = tp.broadcast_spatial(v2[0], 2, 2);
          return tp.sum(tp.mul(bb, bb));
        },
        {V}) < 1e-4);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v2) {
          const Var tt = tp.transpose2d(v2[0]);
          const Var rr = tp.reshape(tt, {2, 6});
          return tp.mean(tp.mul(rr, tp.scalar_mul(rr, 1.7)));
        },
        {M}) < 1e-4);
}

TEST_CASE("lstm_cell zero weights give zero hidden state") {
  Tape<double> t;
  const int cin = 3, ct = 4;
  const Var x = t.leaf(Tensor<double>::from({3}, {1, -2, 3}));
  const Var h = t.leaf(Tensor<double>({4}));
  const Var c = t.leaf(Tensor<double>({4}));
  const Var wih = t.leaf(Tensor<double>({4 * ct, cin}));
  const Var whh = t.leaf(Tensor<double>({4 * ct, ct}));
  const Var bias = t.leaf(Tensor<double>({4 * ct}));
  const Var cell = t.lstm_cell(x, h, c, wih, whh, bias);
  const Var hn = t.lstm_h(cell);
  const Var cn = t.lstm_c(cell);
  for (double v : t.value(hn).data) CHECK(v == doctest::Approx(0.0));
  for (double v : t.value(cn).data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("lstm_cell saturated gates preserve cell state") {
  const int cin = 2, ct = 3;
  Tape<double> t;
  const Var x = t.leaf(Tensor<double>::from({2}, {0.3, -0.7}));
  const Var h = t.leaf(Tensor<double>::from({3}, {0.1, 0.2, 0.3}));
  const auto C = Tensor<double>::from({3}, {0.5, -1.0, 2.0});
  const Var c = t.leaf(C);
  const Var wih = t.leaf(Tensor<double>({4 * ct, cin}));
  const Var whh = t.leaf(Tensor<double>({4 * ct, ct}));
  Tensor<double> bias({4 * ct});
  for (int j = 0; j < ct; ++j) {
    bias.data[j] = -20.0;     // input gate shut
    bias.data[ct + j] = 20.0; // forget gate open
  }
  const Var b = t.leaf(bias);
  const Var cn = t.lstm_c(t.lstm_cell(x, h, c, wih, whh, b));
  for (int j = 0; j < ct; ++j) {
    CHECK(std::abs(t.value(cn).data[j] - C.data[j]) / std::abs(C.data[j]) < 1e-6);
  }
}

TEST_CASE("lstm_cell backward matches finite differences") {
  const int cin = 3, ct = 2;
  Rng rng(31);
  const auto X = rand_t({cin}, rng);
  const auto H = rand_t({ct}, rng);
  const auto C = rand_t({ct}, rng);
  const auto Wih = rand_t({4 * ct, cin}, rng, -0.5, 0.5);
  const auto Whh = rand_t({4 * ct, ct}, rng, -0.5, 0.5);
  const auto B = rand_t({4 * ct}, rng, -0.5, 0.5);
  const double err = check(
      [](Tape<double>& tp, const std::vector<Var>& v) {
        const Var cell = tp.lstm_cell(v[0], v[1], v[2], v[3], v[4], v[5]);
        const Var hn = tp.lstm_h(cell);
        const Var cn = tp.lstm_c(cell);
        return tp.sum(tp.add(tp.mul(hn, hn), tp.mul(cn, cn)));
      },
      {X, H, C, Wih, Whh, B});
  CHECK(err < 1e-4);
}

TEST_CASE("l1_loss_masked") {
  Tape<double> t;
  const Var p = t.leaf(Tensor<double>::from({4}, {1, 2, 3, 4}));
  auto target = Tensor<double>::from({4}, {2, 2, 5, 0});
  auto mask = Tensor<double>::from({4}, {1, 0, 1, 0});
  const Var loss = t.l1_loss_masked(p, target, mask);
  CHECK(t.value(loss).data[0] == doctest::Approx(1.5));  // (|1-2| + |3-5|)/2
  const Var empty = t.l1_loss_masked(p, target, Tensor<double>({4}));
  CHECK(t.value(empty).data[0] == 0.0);
  CHECK_THROWS_AS(t.l1_loss_masked(p, Tensor<double>({3}), mask), DimError);

  Rng rng(37);
  const auto P = rand_t({6}, rng, 2.0, 5.0);  // keep |pred-target| away from 0
  const auto T2 = rand_t({6}, rng, -2.0, 1.0);
  auto M = Tensor<double>::from({6}, {1, 1, 0, 1, 0, 1});
  CHECK(check([&](Tape<double>& tp, const std::vector<Var>& v) {
          return tp.l1_loss_masked(v[0], T2, M);
        },
        {P}) < 1e-4);
}

TEST_CASE("cross_entropy_logits") {
  Tape<double> t;
  const Var uniform_logits = t.leaf(Tensor<double>({3}));
  const Var l0 = t.cross_entropy_logits(uniform_logits, 1);
  CHECK(t.value(l0).data[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(t.cross_entropy_logits(uniform_logits, 3), ContractError);

  Rng rng(41);
  const auto L = rand_t({5}, rng, -2.0, 2.0);
  CHECK(check([](Tape<double>& tp, const std::vector<Var>& v) {
          return tp.cross_entropy_logits(v[0], 2);
        },
        {L}) < 1e-4);
}

TEST_CASE("backward basics") {
  {
    Tape<double> t;
    const Var x = t.leaf(Tensor<double>::from({1}, {5.0}), true);
    t.backward(x);
    CHECK(t.grad(x).data[0] == 1.0);
  }
  {
    Tape<double> t;
    const Var x = t.leaf(Tensor<double>::from({3}, {1, 2, 3}), true);
    const Var loss = t.sum(t.mul(x, x));
    t.backward(loss);
    CHECK(t.grad(x).data == std::vector<double>{2, 4, 6});
  }
  {
    Tape<double> t;
    const Var x = t.leaf(Tensor<double>::from({1}, {3.0}), true);
    const Var y = t.add(x, x);  // diamond fan-out
    t.backward(y);
    CHECK(t.grad(x).data[0] == 2.0);
  }
  {
    Tape<double> t;
    const Var x = t.leaf(Tensor<double>({2, 2}), true);
    CHECK_THROWS_AS(t.backward(x), ContractError);
  }
  {
    // constants collect no gradient and spend no work
    Tape<double> t;
    const Var x = t.leaf(Tensor<double>::from({2}, {1, 2}), true);
    const Var c = t.constant(Tensor<double>::from({2}, {10, 20}));
    const Var loss = t.sum(t.mul(x, c));
    t.backward(loss);
    CHECK(t.grad(x).data == std::vector<double>{10, 20});
    CHECK(t.grad(c).data == std::vector<double>{0, 0});
  }
}

TEST_CASE("grad_check on analytic cases") {
  // f(x) = x^2 at x = 3 with eps = 1e-4
  const double err_sq = grad_check(
      [](Tape<double>& tp, Var x) { return tp.mul(x, x); },
      Tensor<double>::from({1}, {3.0}), 1e-4);
  CHECK(err_sq < 1e-6);
  // linear map: FD is exact up to rounding
  Rng rng(43);
  const auto X = rand_t({6}, rng);
  const double err_lin = grad_check(
      [](Tape<double>& tp, Var x) { return tp.sum(tp.scalar_mul(x, 2.5)); }, X, 1e-4);
  CHECK(err_lin < 1e-10);
}

TEST_CASE("poly_lr schedule") {
  CHECK(poly_lr(0, 1000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(poly_lr(1000, 1000) == 0.0);
  CHECK(poly_lr(2000, 1000) == 0.0);
  CHECK(poly_lr(500, 1000, 1e-4, 0.9) == doctest::Approx(5.3588673e-5).epsilon(1e-4));
  CHECK_THROWS_AS(poly_lr(0, 0), ContractError);
}

TEST_CASE("adam_step zero gradient leaves parameters unchanged") {
  std::vector<Tensor<float>> params{Tensor<float>::from({3}, {1.f, -2.f, 3.f})};
  const auto before = params[0].data;
  std::vector<Tensor<float>> grads{Tensor<float>({3})};
  AdamState<float> st;
  st.init(params);
  adam_step(params, grads, st, 1e-2);
  CHECK(params[0].data == before);
  CHECK(st.step == 1);
}

TEST_CASE("adam_step first update magnitude is about lr") {
  std::vector<Tensor<float>> params{Tensor<float>::from({2}, {0.f, 0.f})};
  std::vector<Tensor<float>> grads{Tensor<float>::from({2}, {0.3f, -4.0f})};
  AdamState<float> st;
  st.init(params);
  const double lr = 1e-3;
  adam_step(params, grads, st, lr);
  // bias-corrected first step: delta = lr * g / (|g| + eps) = lr * sign(g)
  CHECK(params[0].data[0] == doctest::Approx(-lr).epsilon(1e-4));
  CHECK(params[0].data[1] == doctest::Approx(lr).epsilon(1e-4));
}

TEST_CASE("adam_step determinism") {
  auto run = [] {
    Rng rng(77);
    std::vector<Tensor<float>> params{
        Tensor<float>::uniform({4, 4}, rng, -1.0, 1.0),
        Tensor<float>::uniform({4}, rng, -1.0, 1.0)};
    AdamState<float> st;
    st.init(params);
    for (int i = 0; i < 10; ++i) {
      std::vector<Tensor<float>> grads{
          Tensor<float>::uniform({4, 4}, rng, -1.0, 1.0),
          Tensor<float>::uniform({4}, rng, -1.0, 1.0)};
      adam_step(params, grads, st, poly_lr(i, 10, 1e-3));
    }
    return params;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a[0].data == b[0].data);
  CHECK(a[1].data == b[1].data);
}

TEST_CASE("rng substreams are independent of each other") {
  Rng root(123);
  Rng a = root.split(1);
  Rng b = root.split(2);
  Rng a2 = Rng(123).split(1);
  CHECK(a.next_u64() == a2.next_u64());
  CHECK(a.next_u64() != b.next_u64());
  // uniform() stays in [0,1)
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tride_ckpt_test";
  fs::create_directories(dir);
  ParamSet params;
  Rng rng(99);
  params.add("enc.w", Tensor<float>::uniform({3, 5}, rng, -2.0, 2.0));
  params.add("enc.b", Tensor<float>::from({2}, {0.0f, -0.0f}));
  Tensor<float> weird({4});
  weird.data = {std::numeric_limits<float>::infinity(), -std::numeric_limits<float>::infinity(),
                std::numeric_limits<float>::quiet_NaN(), 1.17549435e-38f};
  params.add("head.w", weird);

  const std::string manifest = (dir / "model.json").string();
  const std::string blob = (dir / "model.bin").string();
  save_checkpoint(params, manifest, blob);
  const ParamSet loaded = load_checkpoint(manifest, blob);
  REQUIRE(loaded.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(loaded.names[i] == params.names[i]);
    CHECK(loaded.tensors[i].shape == params.tensors[i].shape);
    for (std::size_t j = 0; j < params.tensors[i].numel(); ++j) {
      const auto lhs = std::bit_cast<std::uint32_t>(loaded.tensors[i].data[j]);
      const auto rhs = std::bit_cast<std::uint32_t>(params.tensors[i].data[j]);
      CHECK(lhs == rhs);
    }
  }
  // a second save of the loaded set produces identical bytes
  const std::string manifest2 = (dir / "model2.json").string();
  const std::string blob2 = (dir / "model2.bin").string();
  save_checkpoint(loaded, manifest2, blob2);
  CHECK(detail::read_file_bytes(manifest2) == detail::read_file_bytes(manifest));
  CHECK(detail::read_file_bytes(blob2) == detail::read_file_bytes(blob));
}

TEST_CASE("checkpoint rejects malformed inputs") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tride_ckpt_bad";
  fs::create_directories(dir);
  const std::string manifest = (dir / "m.json").string();
  const std::string blob = (dir / "b.bin").string();
  detail::write_file_bytes(blob, std::string(8, '\0'));

  detail::write_file_bytes(manifest, "not json");
  CHECK_THROWS_AS(load_checkpoint(manifest, blob), FormatError);
  detail::write_file_bytes(manifest, "{\"a\":1}");
  CHECK_THROWS_AS(load_checkpoint(manifest, blob), FormatError);
  detail::write_file_bytes(
      manifest, "[{\"name\":\"w\",\"shape\":[4],\"dtype\":\"f64\",\"byte_offset\":0}]");
  CHECK_THROWS_AS(load_checkpoint(manifest, blob), FormatError);
  detail::write_file_bytes(
      manifest, "[{\"name\":\"w\",\"shape\":[4],\"dtype\":\"f32\",\"byte_offset\":0}]");
  CHECK_THROWS_AS(load_checkpoint(manifest, blob), FormatError);  // 16 bytes needed, 8 present
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.json").string(), blob), FormatError);
}

TEST_CASE("params bind onto a tape and keep order") {
  ParamSet params;
  params.add("a", Tensor<float>::from({2}, {1.f, 2.f}));
  params.add("b", Tensor<float>::from({1}, {3.f}));
  CHECK(params.find("b") == 1);
  CHECK_THROWS_AS(params.add("a", Tensor<float>({1})), ContractError);
  CHECK_THROWS_AS(params.find("zzz"), ContractError);
  Tape<double> t;
  const auto vars = bind_params(t, params);
  REQUIRE(vars.size() == 2);
  CHECK(t.value(vars[0]).data == std::vector<double>{1.0, 2.0});
  CHECK(t.requires_grad(vars[1]));
}
