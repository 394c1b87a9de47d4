#pragma once

#include <functional>
#include <vector>

#include "afusion/ops.hpp"

namespace afusion {

// Relative error convention used by every check in this project:
// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

// Central-difference check of a precomputed analytic gradient. `eval` must
// return the scalar objective for the current contents of x; x is perturbed
// in place and restored. When max_elems > 0 and the tensor is larger, a
// seeded strided subset of elements is checked instead of all of them.
inline double central_diff_max_rel_err(const std::function<double()>& eval,
                                       Tensor<double>& x,
                                       const Tensor<double>& analytic, double h,
                                       Index max_elems = -1,
                                       std::uint64_t sample_seed = 0) {
  const Index n = x.numel();
  std::vector<Index> idx;
  if (max_elems > 0 && n > max_elems) {
    Rng rng(seed_stream(sample_seed, "gradcheck-sample", static_cast<std::uint64_t>(n)));
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    rng.shuffle(all);
    idx.assign(all.begin(), all.begin() + static_cast<std::size_t>(max_elems));
  } else {
    idx.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  }
  double worst = 0.0;
  double* xd = x.data();
  const double* gd = analytic.data();
  for (Index i : idx) {
    const double saved = xd[i];
    xd[i] = saved + h;
    const double fp = eval();
    xd[i] = saved - h;
    const double fm = eval();
    xd[i] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, rel_err(gd[i], numeric));
  }
  return worst;
}

// Checks d f(x) / dx for a scalar-valued graph builder f. The analytic
// gradient comes from one reverse pass; the numeric one from central
// differences of forward-only evaluations. 64-bit throughout.
template <typename F>
double grad_check(F&& f, const Tensor<double>& x0, double h = 1e-4,
                  Index max_elems = -1, std::uint64_t sample_seed = 0) {
  Tensor<double> x = x0.clone();
  Var<double> leaf = Var<double>::leaf(x, true);
  Var<double> y = f(leaf);
  if (y.value().numel() != 1)
    throw ValidationError("grad_check: function output must be scalar, got " +
                          y.value().shape_string());
  y.backward();
  Tensor<double> analytic = leaf.grad().clone();
  auto eval = [&]() -> double {
    return f(Var<double>::constant(x)).value().item();
  };
  return central_diff_max_rel_err(eval, x, analytic, h, max_elems, sample_seed);
}

}  // namespace afusion
