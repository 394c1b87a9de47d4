#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "afusion/ccc.hpp"
#include "afusion/grad_check.hpp"

using namespace afusion;

namespace {

// Independent oracle: Pearson-correlation route, algebraically equal to the
// direct covariance formula but a different code path.
double oracle_ccc(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;  // zero covariance or both constant
  const double r = sxy / std::sqrt(sxx * syy);
  const double sx = std::sqrt(sxx / static_cast<double>(n));
  const double sy = std::sqrt(syy / static_cast<double>(n));
  return 2.0 * r * sx * sy / (sx * sx + sy * sy + (mx - my) * (mx - my));
}

}  // namespace

TEST_CASE("ccc fixed examples") {
  std::vector<double> a = {0.1, 0.5, -0.3};
  CHECK(ccc<double>(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> c = {0.7, 0.7, 0.7};
  std::vector<double> v = {0.1, 0.9, -0.5};
  CHECK(ccc<double>(c, v) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<double> p = {1, -1};
  std::vector<double> q = {-1, 1};
  CHECK(ccc<double>(p, q) == doctest::Approx(-1.0).epsilon(1e-12));

  // value frozen from the oracle: per-dim stats give exactly 0.65
  std::vector<double> x = {0, 1, 2, 3};
  std::vector<double> y = {1, 2, 3, 5};
  CHECK(std::abs(ccc<double>(x, y) - 0.65) < 1e-10);
  CHECK(std::abs(ccc<double>(x, y) - oracle_ccc(x, y)) < 1e-10);
}

TEST_CASE("ccc matches oracle on 100 random pairs") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.normal();
      y[i] = 0.5 * x[i] + 0.7 * rng.normal() + 0.1;
    }
    CHECK(std::abs(ccc<double>(x, y) - oracle_ccc(x, y)) < 1e-10);
  }
}

TEST_CASE("ccc properties") {
  Rng rng(99);
  std::vector<double> x(64), y(64);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  CHECK(std::abs(ccc<double>(x, y) - ccc<double>(y, x)) < 1e-12);
  CHECK(ccc<double>(x, x) == doctest::Approx(1.0).epsilon(1e-12));

  // shift sensitivity separates CCC from Pearson
  for (double c : {0.5, -0.25, 2.0}) {
    std::vector<double> xs = x;
    for (auto& v : xs) v += c;
    CHECK(ccc<double>(x, xs) < 1.0);
  }

  std::vector<double> k1 = {1.0, 1.0, 1.0};
  CHECK(ccc<double>(k1, k1) == 0.0);  // both constant: defined as 0
  std::vector<double> one = {1.0};
  CHECK_THROWS_AS(ccc<double>(one, one), ValidationError);
  std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(ccc<double>(two, one), ValidationError);
}

TEST_CASE("masked_eval") {
  Rng rng(17);
  const Index n = 40;
  Tensor<double> pred = Tensor<double>::randn({n, 2}, rng);
  Tensor<double> target = Tensor<double>::randn({n, 2}, rng);

  std::vector<std::uint8_t> all(static_cast<std::size_t>(n), 1);
  CccReport full = masked_eval(pred, target, all);
  std::vector<double> pv(static_cast<std::size_t>(n)), tv(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    pv[static_cast<std::size_t>(i)] = pred(i, 0);
    tv[static_cast<std::size_t>(i)] = target(i, 0);
  }
  CHECK(full.valence == doctest::Approx(ccc<double>(pv, tv)).epsilon(1e-12));
  CHECK(full.mean == doctest::Approx(0.5 * (full.valence + full.arousal)).epsilon(1e-12));

  // interleaved mask equals the oracle on the compacted subsequences
  std::vector<std::uint8_t> interleaved(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) interleaved[static_cast<std::size_t>(i)] = (i % 3 != 1);
  CccReport part = masked_eval(pred, target, interleaved);
  std::vector<double> cpv, ctv, cpa, cta;
  for (Index i = 0; i < n; ++i) {
    if (i % 3 == 1) continue;
    cpv.push_back(pred(i, 0));
    ctv.push_back(target(i, 0));
    cpa.push_back(pred(i, 1));
    cta.push_back(target(i, 1));
  }
  CHECK(part.valence == doctest::Approx(oracle_ccc(cpv, ctv)).epsilon(1e-10));
  CHECK(part.arousal == doctest::Approx(oracle_ccc(cpa, cta)).epsilon(1e-10));

  std::vector<std::uint8_t> none(static_cast<std::size_t>(n), 0);
  CHECK_THROWS_AS(masked_eval(pred, target, none), ValidationError);
}

TEST_CASE("ccc_loss examples") {
  Rng rng(5);
  Tensor<double> t = Tensor<double>::randn({30, 2}, rng);
  auto tv = Var<double>::constant(t);
  auto loss0 = ccc_loss(Var<double>::constant(t.clone()), tv);
  CHECK(loss0.value().item() == doctest::Approx(0.0).epsilon(1e-6));

  for (int i = 0; i < 10; ++i) {
    Tensor<double> p = Tensor<double>::randn({25, 2}, rng);
    Tensor<double> q = Tensor<double>::randn({25, 2}, rng);
    const double l = ccc_loss(Var<double>::constant(p), Var<double>::constant(q)).value().item();
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }

  Tensor<double> bad = Tensor<double>::randn({10, 2}, rng);
  Tensor<double> bad2 = Tensor<double>::randn({11, 2}, rng);
  CHECK_THROWS_AS(ccc_loss(Var<double>::constant(bad), Var<double>::constant(bad2)),
                  ValidationError);
}

TEST_CASE("ccc_loss gradient vs central differences, T=50") {
  Rng rng(31);
  Tensor<double> pred = Tensor<double>::randn({50, 2}, rng);
  Tensor<double> target = Tensor<double>::randn({50, 2}, rng);
  auto tv = Var<double>::constant(target);
  const double err =
      grad_check([&](const Var<double>& v) { return ccc_loss(v, tv); }, pred);
  CHECK(err < 1e-4);
}

TEST_CASE("masked ccc_loss gradient") {
  Rng rng(37);
  Tensor<double> pred = Tensor<double>::randn({20, 2}, rng);
  Tensor<double> target = Tensor<double>::randn({20, 2}, rng);
  std::vector<Index> rows;
  for (Index i = 0; i < 20; ++i)
    if (i % 4 != 2) rows.push_back(i);
  auto tv = Var<double>::constant(target);
  const double err = grad_check(
      [&](const Var<double>& v) { return ccc_loss_masked(v, tv, rows); }, pred);
  CHECK(err < 1e-4);
}

TEST_CASE("metric path is epsilon-free") {
  // identical non-constant sequences: metric exactly 1, loss slightly > 0
  std::vector<double> x = {0.2, -0.4, 0.9, 0.1};
  CHECK(ccc<double>(x, x) == 1.0);
  Tensor<double> t({4, 2});
  for (Index i = 0; i < 4; ++i) {
    t(i, 0) = x[static_cast<std::size_t>(i)];
    t(i, 1) = -x[static_cast<std::size_t>(i)];
  }
  const double l =
      ccc_loss(Var<double>::constant(t.clone()), Var<double>::constant(t)).value().item();
  CHECK(l > 0.0);
  CHECK(l < 1e-6);
}
