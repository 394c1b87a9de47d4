#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afusion/grad_check.hpp"
#include "afusion/ops.hpp"

using namespace afusion;

namespace {

Var<double> weighted_sum(const Var<double>& y, const Tensor<double>& w) {
  return sum_all(mul(y, Var<double>::constant(w)));
}

Tensor<double> randn(Shape shape, Rng& rng, double stddev = 1.0) {
  return Tensor<double>::randn(std::move(shape), rng, stddev);
}

// Values bounded away from zero, for kink-free relu checks.
Tensor<double> rand_nonzero(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.0);
    t.data()[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3});
  CHECK(t.numel() == 6);
  t(1, 2) = 5.0f;
  CHECK(t(1, 2) == 5.0f);
  CHECK(t.reshaped({3, 2}).numel() == 6);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ValidationError);
  CHECK_THROWS_AS(Tensor<float>({0, 2}), ValidationError);
  Tensor<float> c = t.clone();
  c(0, 0) = 9.0f;
  CHECK(t(0, 0) == 0.0f);
}

TEST_CASE("linear identity and bias") {
  auto I2 = Tensor<double>({2, 2});
  I2(0, 0) = 1;
  I2(1, 1) = 1;
  auto x = Var<double>::constant(I2);
  auto W = Var<double>::constant(I2);
  auto b = Var<double>::constant(Tensor<double>({2}));
  auto y = linear(x, W, b);
  CHECK(y.value()(0, 0) == doctest::Approx(1.0));
  CHECK(y.value()(0, 1) == doctest::Approx(0.0));
  CHECK(y.value()(1, 1) == doctest::Approx(1.0));

  auto x2 = Var<double>::constant(Tensor<double>({1, 2}, {1, 2}));
  auto b2 = Var<double>::constant(Tensor<double>({2}, {1, 1}));
  auto y2 = linear(x2, W, b2);
  CHECK(y2.value()(0, 0) == doctest::Approx(2.0));
  CHECK(y2.value()(0, 1) == doctest::Approx(3.0));

  auto bad = Var<double>::constant(Tensor<double>({1, 3}));
  CHECK_THROWS_AS(linear(bad, W, b), ValidationError);
}

TEST_CASE("linear gradient vs central differences") {
  Rng rng(7);
  Tensor<double> x = randn({3, 4}, rng);
  Tensor<double> w0 = randn({4, 2}, rng);
  Tensor<double> b0 = randn({2}, rng);
  auto xg = Var<double>::constant(x);
  auto bg = Var<double>::constant(b0);
  double err = grad_check(
      [&](const Var<double>& w) { return sum_all(linear(xg, w, bg)); }, w0);
  CHECK(err < 1e-4);
}

TEST_CASE("conv1d: 1x1 identity kernel") {
  Rng rng(3);
  Tensor<double> x = randn({6, 2}, rng);
  Tensor<double> k({1, 2, 2});
  k(0, 0, 0) = 1;
  k(0, 1, 1) = 1;
  auto y = conv1d_causal(Var<double>::constant(x), Var<double>::constant(k),
                         Var<double>::constant(Tensor<double>({2})), 1);
  for (Index t = 0; t < 6; ++t)
    for (Index c = 0; c < 2; ++c) CHECK(y.value()(t, c) == doctest::Approx(x(t, c)));
}

TEST_CASE("conv1d: dilated impulse response") {
  Tensor<double> x({8, 1});
  x(0, 0) = 1.0;
  Tensor<double> k = Tensor<double>::ones({3, 1, 1});
  auto y = conv1d_causal(Var<double>::constant(x), Var<double>::constant(k),
                         Var<double>::constant(Tensor<double>({1})), 2);
  const double expect[8] = {1, 0, 1, 0, 1, 0, 0, 0};
  for (Index t = 0; t < 8; ++t) CHECK(y.value()(t, 0) == doctest::Approx(expect[t]));
}

TEST_CASE("conv1d: causality is bit-exact") {
  Rng rng(11);
  Tensor<double> x = randn({10, 3}, rng);
  Tensor<double> k = randn({3, 3, 2}, rng);
  Tensor<double> b = randn({2}, rng);
  auto base = conv1d_causal(Var<double>::constant(x), Var<double>::constant(k),
                            Var<double>::constant(b), 2);
  Tensor<double> xp = x.clone();
  const Index t0 = 4;
  xp(t0, 1) += 100.0;
  auto pert = conv1d_causal(Var<double>::constant(xp), Var<double>::constant(k),
                            Var<double>::constant(b), 2);
  for (Index t = 0; t < t0; ++t)
    for (Index c = 0; c < 2; ++c) CHECK(base.value()(t, c) == pert.value()(t, c));
  CHECK(base.value()(t0, 0) != pert.value()(t0, 0));
  CHECK_THROWS_AS(conv1d_causal(Var<double>::constant(x), Var<double>::constant(k),
                                Var<double>::constant(b), 0),
                  ValidationError);
}

TEST_CASE("conv2d: 1x1 unit kernel passes input through") {
  Rng rng(5);
  Tensor<double> x = randn({1, 3, 3}, rng);
  Tensor<double> k = Tensor<double>::ones({1, 1, 1, 1});
  auto y = conv2d(Var<double>::constant(x), Var<double>::constant(k),
                  Var<double>::constant(Tensor<double>({1})), 1, 0);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(y.value()(0, i, j) == doctest::Approx(x(0, i, j)));
}

TEST_CASE("conv2d: 2x2 ones over 4x4 ones, stride 2") {
  Tensor<double> x = Tensor<double>::ones({1, 4, 4});
  Tensor<double> k = Tensor<double>::ones({1, 1, 2, 2});
  auto y = conv2d(Var<double>::constant(x), Var<double>::constant(k),
                  Var<double>::constant(Tensor<double>({1})), 2, 0);
  CHECK(y.value().shape() == Shape{1, 2, 2});
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) CHECK(y.value()(0, i, j) == doctest::Approx(4.0));
}

TEST_CASE("conv2d: kernel larger than padded input rejected") {
  Tensor<double> x = Tensor<double>::ones({1, 3, 3});
  Tensor<double> k = Tensor<double>::ones({1, 1, 5, 5});
  CHECK_THROWS_AS(conv2d(Var<double>::constant(x), Var<double>::constant(k),
                         Var<double>::constant(Tensor<double>({1})), 1, 0),
                  ValidationError);
}

TEST_CASE("softmax examples") {
  auto y = softmax(Var<double>::constant(Tensor<double>({3})), 0);
  for (Index i = 0; i < 3; ++i) CHECK(y.value().data()[i] == doctest::Approx(1.0 / 3));
  Rng rng(2);
  auto z = softmax(Var<double>::constant(randn({4, 5}, rng)), 1);
  for (Index r = 0; r < 4; ++r) {
    double s = 0;
    for (Index c = 0; c < 5; ++c) s += z.value()(r, c);
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("relu examples") {
  Tensor<double> x({2}, {-2.0, 3.0});
  auto y = relu(Var<double>::constant(x));
  CHECK(y.value().data()[0] == 0.0);
  CHECK(y.value().data()[1] == 3.0);
}

TEST_CASE("concat mismatch rejected") {
  Rng rng(1);
  auto a = Var<double>::constant(randn({2, 3}, rng));
  auto b = Var<double>::constant(randn({3, 3}, rng));
  CHECK_THROWS_AS(concat<double>({a, b}, 1), ValidationError);
  auto c = concat<double>({a, a}, 1);
  CHECK(c.value().shape() == Shape{2, 6});
}

TEST_CASE("dropout semantics") {
  Rng rng(9);
  Tensor<double> x = Tensor<double>::ones({10000});
  auto v = Var<double>::constant(x);
  Rng r0(1);
  auto id0 = dropout(v, 0.0, true, r0);
  CHECK(id0.value().data() == x.data());  // identity: same storage
  Rng r1(1);
  auto id1 = dropout(v, 0.5, false, r1);
  CHECK(id1.value().data() == x.data());
  Rng r2(1234);
  auto y = dropout(v, 0.5, true, r2);
  Index survivors = 0;
  for (Index i = 0; i < 10000; ++i)
    if (y.value().data()[i] != 0.0) ++survivors;
  const double frac = static_cast<double>(survivors) / 10000.0;
  CHECK(frac > 0.47);
  CHECK(frac < 0.53);
  for (Index i = 0; i < 10000; ++i)
    if (y.value().data()[i] != 0.0) CHECK(y.value().data()[i] == doctest::Approx(2.0));
  CHECK_THROWS_AS(dropout(v, 1.0, true, rng), ValidationError);
  CHECK_THROWS_AS(dropout(v, -0.1, true, rng), ValidationError);

  // same seed, same mask
  Rng ra(7), rb(7);
  auto ya = dropout(v, 0.3, true, ra);
  auto yb = dropout(v, 0.3, true, rb);
  for (Index i = 0; i < 10000; ++i) CHECK(ya.value().data()[i] == yb.value().data()[i]);
}

TEST_CASE("grad_check of sum is exact") {
  Rng rng(21);
  Tensor<double> x = randn({7}, rng);
  double err = grad_check([](const Var<double>& v) { return sum_all(v); }, x);
  CHECK(err < 1e-9);
}

TEST_CASE("grad_check rejects non-scalar objective") {
  Rng rng(21);
  Tensor<double> x = randn({3}, rng);
  CHECK_THROWS_AS(grad_check([](const Var<double>& v) { return add(v, v); }, x),
                  ValidationError);
}

TEST_CASE("backward requires scalar output") {
  Rng rng(3);
  auto v = Var<double>::leaf(randn({3}, rng), true);
  CHECK_THROWS_AS(add(v, v).backward(), ValidationError);
}

TEST_CASE("double backward accumulates exactly 2x") {
  Rng rng(13);
  auto v = Var<double>::leaf(randn({4}, rng), true);
  auto loss = sum_all(mul(v, v));
  loss.backward();
  Tensor<double> g1 = v.grad().clone();
  loss.backward();
  for (Index i = 0; i < 4; ++i)
    CHECK(v.grad().data()[i] == doctest::Approx(2.0 * g1.data()[i]));
  v.zero_grad();
  loss.backward();
  for (Index i = 0; i < 4; ++i) CHECK(v.grad().data()[i] == doctest::Approx(g1.data()[i]));
}

TEST_CASE("diamond graph: each node visited once") {
  auto v = Var<double>::leaf(Tensor<double>::scalar(3.0), true);
  auto y = add(v, v);  // same node twice
  auto stats = y.backward();
  CHECK(v.grad().item() == doctest::Approx(2.0));
  CHECK(stats.nodes_visited == 2);  // leaf + add
}

TEST_CASE("operator gradients vs central differences, 5 random instances each") {
  for (std::uint64_t inst = 0; inst < 5; ++inst) {
    Rng rng(100 + inst);
    const Index n = 3 + static_cast<Index>(rng.below(6));
    const Index m = 2 + static_cast<Index>(rng.below(4));
    Tensor<double> w = randn({n, m}, rng);

    // relu (inputs bounded away from the kink)
    {
      Tensor<double> x = rand_nonzero({n, m}, rng);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(relu(v), w); }, x) <
            1e-4);
    }
    // tanh
    {
      Tensor<double> x = randn({n, m}, rng);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(tanh(v), w); }, x) <
            1e-4);
    }
    // add / sub / mul / div
    {
      Tensor<double> x = randn({n, m}, rng);
      Tensor<double> other = rand_nonzero({n, m}, rng);
      auto o = Var<double>::constant(other);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(add(v, o), w); }, x) <
            1e-4);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(sub(o, v), w); }, x) <
            1e-4);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(mul(v, o), w); }, x) <
            1e-4);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(div(o, v), w); },
                       rand_nonzero({n, m}, rng)) < 1e-4);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(div(v, o), w); }, x) <
            1e-4);
    }
    // scale / add_const / sub_scalar
    {
      Tensor<double> x = randn({n, m}, rng);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(scale(v, -1.7), w); },
                       x) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(add_const(v, 2.5), w); }, x) <
            1e-4);
      auto s = Var<double>::constant(Tensor<double>::scalar(0.4));
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(sub_scalar(v, s), w); }, x) <
            1e-4);
      Tensor<double> s0 = Tensor<double>::scalar(0.3);
      auto xc = Var<double>::constant(x);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(sub_scalar(xc, v), w); },
                s0) < 1e-4);
    }
    // mean / variance along each axis
    {
      Tensor<double> x = randn({n, m}, rng);
      for (Index ax = 0; ax < 2; ++ax) {
        Tensor<double> wr = randn({ax == 0 ? m : n}, rng);
        CHECK(grad_check(
                  [&](const Var<double>& v) { return weighted_sum(mean(v, ax), wr); }, x) <
              1e-4);
        CHECK(grad_check(
                  [&](const Var<double>& v) { return weighted_sum(variance(v, ax), wr); },
                  x) < 1e-4);
      }
    }
    // softmax
    {
      Tensor<double> x = randn({n, m}, rng);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(softmax(v, 1), w); },
                       x) < 1e-4);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(softmax(v, 0), w); },
                       x) < 1e-4);
    }
    // concat
    {
      Tensor<double> x = randn({n, m}, rng);
      auto o = Var<double>::constant(randn({n, 2}, rng));
      Tensor<double> wc = randn({n, m + 2}, rng);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(concat<double>({v, o}, 1), wc);
                },
                x) < 1e-4);
    }
    // col / gather_rows / rowwise_scale
    {
      Tensor<double> x = randn({n, m}, rng);
      Tensor<double> wr = randn({n}, rng);
      CHECK(grad_check([&](const Var<double>& v) { return weighted_sum(col(v, 1), wr); },
                       x) < 1e-4);
      std::vector<Index> idx = {0, n - 1, 0, 1};
      Tensor<double> wg = randn({4, m}, rng);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(gather_rows(v, idx), wg);
                },
                x) < 1e-4);
      auto sv = Var<double>::constant(randn({n}, rng));
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(rowwise_scale(v, sv), w); },
                x) < 1e-4);
      auto xc = Var<double>::constant(x);
      Tensor<double> srow = randn({n}, rng);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(rowwise_scale(xc, v), w); },
                srow) < 1e-4);
    }
    // linear, all three inputs
    {
      const Index din = 3, dout = 2;
      Tensor<double> x = randn({n, din}, rng);
      Tensor<double> w0 = randn({din, dout}, rng);
      Tensor<double> b0 = randn({dout}, rng);
      Tensor<double> wl = randn({n, dout}, rng);
      auto xc = Var<double>::constant(x);
      auto wc = Var<double>::constant(w0);
      auto bc = Var<double>::constant(b0);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(linear(v, wc, bc), wl); },
                x) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(linear(xc, v, bc), wl); },
                w0) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(linear(xc, wc, v), wl); },
                b0) < 1e-4);
    }
    // bmm
    {
      const Index B = 2, T = 3, U = 4, D = 2;
      Tensor<double> a = randn({B, T, D}, rng);
      Tensor<double> b0 = randn({B, U, D}, rng);
      Tensor<double> wt = randn({B, T, U}, rng);
      auto ac = Var<double>::constant(a);
      auto bc = Var<double>::constant(b0);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(bmm_nt(v, bc), wt); }, a) <
            1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(bmm_nt(ac, v), wt); }, b0) <
            1e-4);
      Tensor<double> p = randn({B, T, U}, rng);
      Tensor<double> q = randn({B, U, D}, rng);
      Tensor<double> wn = randn({B, T, D}, rng);
      auto pc = Var<double>::constant(p);
      auto qc = Var<double>::constant(q);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(bmm_nn(v, qc), wn); }, p) <
            1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) { return weighted_sum(bmm_nn(pc, v), wn); }, q) <
            1e-4);
    }
    // conv1d, all inputs, random geometry
    {
      const Index B = 1 + static_cast<Index>(rng.below(2));
      const Index T = 4 + static_cast<Index>(rng.below(4));
      const Index Ci = 1 + static_cast<Index>(rng.below(3));
      const Index Co = 1 + static_cast<Index>(rng.below(3));
      const Index k = 1 + static_cast<Index>(rng.below(3));
      const Index d = 1 + static_cast<Index>(rng.below(3));
      Tensor<double> x = randn({B, T, Ci}, rng);
      Tensor<double> kk = randn({k, Ci, Co}, rng);
      Tensor<double> bb = randn({Co}, rng);
      Tensor<double> wv = randn({B, T, Co}, rng);
      auto xc = Var<double>::constant(x);
      auto kc = Var<double>::constant(kk);
      auto bc = Var<double>::constant(bb);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(conv1d_causal(v, kc, bc, d), wv);
                },
                x) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(conv1d_causal(xc, v, bc, d), wv);
                },
                kk) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(conv1d_causal(xc, kc, v, d), wv);
                },
                bb) < 1e-4);
    }
    // conv2d, all inputs, random geometry
    {
      const Index F = 1 + static_cast<Index>(rng.below(2));
      const Index C = 1 + static_cast<Index>(rng.below(2));
      const Index H = 4 + static_cast<Index>(rng.below(3));
      const Index W = 4 + static_cast<Index>(rng.below(3));
      const Index kh = 1 + static_cast<Index>(rng.below(3));
      const Index kw = 1 + static_cast<Index>(rng.below(3));
      const Index Co = 1 + static_cast<Index>(rng.below(2));
      const Index s = 1 + static_cast<Index>(rng.below(2));
      const Index p = static_cast<Index>(rng.below(2));
      Tensor<double> x = randn({F, C, H, W}, rng);
      Tensor<double> kk = randn({Co, C, kh, kw}, rng);
      Tensor<double> bb = randn({Co}, rng);
      const Index Ho = (H + 2 * p - kh) / s + 1;
      const Index Wo = (W + 2 * p - kw) / s + 1;
      Tensor<double> wv = randn({F, Co, Ho, Wo}, rng);
      auto xc = Var<double>::constant(x);
      auto kc = Var<double>::constant(kk);
      auto bc = Var<double>::constant(bb);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(conv2d(v, kc, bc, s, p), wv);
                },
                x) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(conv2d(xc, v, bc, s, p), wv);
                },
                kk) < 1e-4);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(conv2d(xc, kc, v, s, p), wv);
                },
                bb) < 1e-4);
    }
    // dropout with a frozen mask
    {
      Tensor<double> x = randn({n, m}, rng);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  Rng fixed(777);
                  return weighted_sum(dropout(v, 0.4, true, fixed), w);
                },
                x) < 1e-4);
    }
    // reshape / mean_all
    {
      Tensor<double> x = randn({n, m}, rng);
      Tensor<double> wf = randn({n * m}, rng);
      CHECK(grad_check(
                [&](const Var<double>& v) {
                  return weighted_sum(reshape(v, {n * m}), wf);
                },
                x) < 1e-4);
      CHECK(grad_check([&](const Var<double>& v) { return mean_all(v); }, x) < 1e-4);
    }
  }
}

TEST_CASE("variance gradient matches finite differences on length-10 vector") {
  Rng rng(55);
  Tensor<double> x = Tensor<double>::randn({10}, rng);
  double err =
      grad_check([](const Var<double>& v) { return variance(v, 0); }, x);
  CHECK(err < 1e-4);
}

TEST_CASE("operators are deterministic") {
  Rng rng(6);
  Tensor<double> x = Tensor<double>::randn({5, 4}, rng);
  auto y1 = softmax(Var<double>::constant(x), 1);
  auto y2 = softmax(Var<double>::constant(x), 1);
  for (Index i = 0; i < x.numel(); ++i)
    CHECK(y1.value().data()[i] == y2.value().data()[i]);
}
